use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::glorot_uniform;
use crate::{Error, Result, Scalar};

/// Fully connected layer, `y = x Wᵀ + b` with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    weight: Array2<T>,
    bias: Array1<T>,
}

#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub input: Array2<T>,
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(weight: Array2<T>, bias: Array1<T>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::shape(
                format!("bias of length {}", weight.nrows()),
                format!("bias of length {}", bias.len()),
            ));
        }
        Ok(Self {
            weight: weight.as_standard_layout().into_owned(),
            bias,
        })
    }

    pub fn glorot(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: glorot_uniform(out_dim, in_dim, in_dim, out_dim, rng),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn weight(&self) -> &Array2<T> {
        &self.weight
    }

    pub fn bias(&self) -> &Array1<T> {
        &self.bias
    }

    pub fn forward(&self, input: ArrayView2<T>) -> Result<Array2<T>> {
        if input.ncols() != self.in_dim() {
            return Err(Error::shape(
                (input.nrows(), self.in_dim()),
                input.dim(),
            ));
        }
        Ok(input.dot(&self.weight.t()) + &self.bias)
    }

    pub fn backward(&self, input: ArrayView2<T>, grad_output: ArrayView2<T>) -> DenseGrads<T> {
        DenseGrads {
            input: grad_output.dot(&self.weight),
            weight: grad_output.t().dot(&input),
            bias: grad_output.sum_axis(Axis(0)),
        }
    }

    pub(crate) fn param_slices(&self) -> [&[T]; 2] {
        [
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("contiguous"),
        ]
    }

    pub(crate) fn param_slices_mut(&mut self) -> [&mut [T]; 2] {
        [
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("contiguous"),
        ]
    }
}
