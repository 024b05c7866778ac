use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::Mode;
use crate::{Error, Result, Scalar};

/// Per-feature batch normalisation.
///
/// Running statistics follow `running = (1 − momentum)·running +
/// momentum·batch`, with the unbiased batch variance.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    scale: Array1<T>,
    shift: Array1<T>,
    running_mean: Array1<T>,
    running_var: Array1<T>,
    momentum: T,
    epsilon: T,
}

#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    normalized: Array2<T>,
    inv_std: Array1<T>,
}

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;

impl<T: Scalar> BatchNorm<T> {
    pub fn new(width: usize) -> Self {
        Self {
            scale: Array1::ones(width),
            shift: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: T::of(DEFAULT_MOMENTUM),
            epsilon: T::of(DEFAULT_EPSILON),
        }
    }

    pub fn from_parts(
        scale: Array1<T>,
        shift: Array1<T>,
        running_mean: Array1<T>,
        running_var: Array1<T>,
        momentum: T,
        epsilon: T,
    ) -> Result<Self> {
        let w = scale.len();
        for (name, len) in [
            ("shift", shift.len()),
            ("running_mean", running_mean.len()),
            ("running_var", running_var.len()),
        ] {
            if len != w {
                return Err(Error::shape(format!("{name} of length {w}"), len));
            }
        }
        if running_var.iter().any(|&v| v < T::zero()) {
            return Err(Error::Parameter("batchnorm running variance must be >= 0".into()));
        }
        if !(epsilon > T::zero()) {
            return Err(Error::Parameter("batchnorm epsilon must be > 0".into()));
        }
        Ok(Self {
            scale,
            shift,
            running_mean,
            running_var,
            momentum,
            epsilon,
        })
    }

    pub fn width(&self) -> usize {
        self.scale.len()
    }

    pub fn scale(&self) -> &Array1<T> {
        &self.scale
    }

    pub fn shift(&self) -> &Array1<T> {
        &self.shift
    }

    pub fn running_mean(&self) -> &Array1<T> {
        &self.running_mean
    }

    pub fn running_var(&self) -> &Array1<T> {
        &self.running_var
    }

    pub fn momentum(&self) -> T {
        self.momentum
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn apply(&mut self, input: ArrayView2<T>, mode: Mode) -> Result<Array2<T>> {
        match mode {
            Mode::Train => self.forward_train(input).map(|(y, _)| y),
            Mode::Infer => self.forward_infer(input),
        }
    }

    fn check_width(&self, input: &ArrayView2<T>) -> Result<()> {
        if input.ncols() != self.width() {
            return Err(Error::shape((input.nrows(), self.width()), input.dim()));
        }
        Ok(())
    }

    pub fn forward_train(&mut self, input: ArrayView2<T>) -> Result<(Array2<T>, BatchNormCache<T>)> {
        self.check_width(&input)?;
        let n = input.nrows();
        if n < 2 {
            return Err(Error::Parameter(
                "batch normalisation in train mode needs a batch of at least 2".into(),
            ));
        }
        let nf = T::of_usize(n);
        let mean = input.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = &input - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / nf;
        let inv_std = var.mapv(|v| T::one() / (v + self.epsilon).sqrt());
        let normalized = &centered * &inv_std;
        let output = &normalized * &self.scale + &self.shift;

        let m = self.momentum;
        let unbias = nf / (nf - T::one());
        self.running_mean
            .zip_mut_with(&mean, |r, &b| *r = (T::one() - m) * *r + m * b);
        self.running_var
            .zip_mut_with(&var, |r, &b| *r = (T::one() - m) * *r + m * b * unbias);

        Ok((output, BatchNormCache { normalized, inv_std }))
    }

    pub fn forward_infer(&self, input: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_width(&input)?;
        let inv_std = self
            .running_var
            .mapv(|v| T::one() / (v + self.epsilon).sqrt());
        Ok((&input - &self.running_mean) * &inv_std * &self.scale + &self.shift)
    }

    /// Returns `(dL/dx, dL/dscale, dL/dshift)`.
    pub fn backward(
        &self,
        cache: &BatchNormCache<T>,
        grad_output: ArrayView2<T>,
    ) -> (Array2<T>, Array1<T>, Array1<T>) {
        let n = T::of_usize(grad_output.nrows());
        let xhat = &cache.normalized;
        let grad_shift = grad_output.sum_axis(Axis(0));
        let grad_scale = (&grad_output * xhat).sum_axis(Axis(0));
        let dxhat = &grad_output * &self.scale;
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
        let grad_input =
            ((dxhat.mapv(|v| v * n) - &sum_dxhat) - xhat * &sum_dxhat_xhat) * &cache.inv_std / n;
        (grad_input, grad_scale, grad_shift)
    }

    pub(crate) fn param_slices(&self) -> [&[T]; 2] {
        [
            self.scale.as_slice().expect("contiguous"),
            self.shift.as_slice().expect("contiguous"),
        ]
    }

    pub(crate) fn param_slices_mut(&mut self) -> [&mut [T]; 2] {
        [
            self.scale.as_slice_mut().expect("contiguous"),
            self.shift.as_slice_mut().expect("contiguous"),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn train_mode_centers_columns() {
        let mut bn = BatchNorm::<f64>::new(2);
        let y = bn
            .apply(array![[1.0, 10.0], [2.0, -4.0], [7.5, 3.0]].view(), Mode::Train)
            .unwrap();
        for m in y.mean_axis(Axis(0)).unwrap() {
            assert!(m.abs() < 1e-9);
        }
        assert!(bn.running_var().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn infer_mode_is_deterministic() {
        let mut bn = BatchNorm::<f64>::new(2);
        bn.apply(array![[1.0, 2.0], [3.0, 5.0]].view(), Mode::Train).unwrap();
        let x = array![[0.3, -0.7]];
        let a = bn.apply(x.view(), Mode::Infer).unwrap();
        let b = bn.apply(x.view(), Mode::Infer).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_row_batch_rejected_in_train_mode() {
        let mut bn = BatchNorm::<f64>::new(3);
        assert!(bn.apply(Array2::zeros((1, 3)).view(), Mode::Train).is_err());
        assert!(bn.apply(Array2::zeros((1, 3)).view(), Mode::Infer).is_ok());
    }

    #[test]
    fn running_statistics_follow_momentum() {
        let mut bn = BatchNorm::<f64>::new(1);
        bn.forward_train(array![[0.0], [2.0]].view()).unwrap();
        // batch mean 1, unbiased var 2
        assert!((bn.running_mean()[0] - 0.1).abs() < 1e-15);
        assert!((bn.running_var()[0] - (0.9 + 0.2)).abs() < 1e-15);
    }
}
