//! Minimal neural-network kernel with hand-derived backward rules.
//!
//! Layers expose explicit `forward`/`backward` pairs; composite models
//! implement [`Network`] so that the shared training loop, the Adam
//! optimiser and the finite-difference checker can drive them.

mod adam;
mod batchnorm;
mod dense;
mod dropout;
mod gradcheck;
mod loss;
mod lstm;
mod sequential;
pub mod serial;
mod train;

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

pub use adam::{Adam, AdamState};
pub use batchnorm::{BatchNorm, BatchNormCache};
pub use dense::{Dense, DenseGrads};
pub use dropout::{dropout_apply, Dropout};
pub use gradcheck::{grad_check, grad_check_sampled, GradCheckReport};
pub use loss::mse_loss;
pub use lstm::{Lstm, LstmCache, LstmGrads};
pub use sequential::{Layer, Sequential, SequentialCache};
pub use train::{train_loop, EpochRecord, TrainConfig, TrainOutcome};

use crate::rng::PipelineRng;
use crate::{Result, Scalar};

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Row-indexable mini-batch container.
pub trait Batch: Sized {
    fn batch_len(&self) -> usize;
    fn take_rows(&self, rows: &[usize]) -> Self;
}

impl<T: Clone> Batch for Array2<T> {
    fn batch_len(&self) -> usize {
        self.nrows()
    }

    fn take_rows(&self, rows: &[usize]) -> Self {
        self.select(Axis(0), rows)
    }
}

/// Flat per-tensor gradients, in the same order as [`Network::params`].
pub type Grads<T> = Vec<Vec<T>>;

/// A trainable model mapping a batch to a `batch × out` matrix.
pub trait Network<T: Scalar>: Clone {
    type Input: Batch;
    type Cache;

    /// Train-mode forward pass. May update running statistics and consume
    /// randomness (dropout masks).
    fn forward_train(
        &mut self,
        input: &Self::Input,
        rng: &mut PipelineRng,
    ) -> Result<(Array2<T>, Self::Cache)>;

    /// Parameter gradients of a scalar loss given `dL/d(output)`.
    fn backward(&self, cache: &Self::Cache, grad_output: &Array2<T>) -> Result<Grads<T>>;

    /// Deterministic inference-mode forward pass.
    fn predict(&self, input: &Self::Input) -> Result<Array2<T>>;

    fn params(&self) -> Vec<&[T]>;

    fn params_mut(&mut self) -> Vec<&mut [T]>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Uniform(−a, a) with a = sqrt(6 / (fan_in + fan_out)).
pub(crate) fn glorot_uniform<T: Scalar>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut impl Rng,
) -> Array2<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    Array2::from_shape_simple_fn((rows, cols), || T::of(dist.sample(rng)))
}

pub(crate) fn relu<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    x.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

pub(crate) fn relu_backward<T: Scalar>(pre: &Array2<T>, grad: &Array2<T>) -> Array2<T> {
    let mut out = grad.clone();
    out.zip_mut_with(pre, |g, &p| {
        if p <= T::zero() {
            *g = T::zero();
        }
    });
    out
}

pub(crate) fn flat<T: Scalar, D: ndarray::Dimension>(a: &ndarray::Array<T, D>) -> Vec<T> {
    a.iter().copied().collect()
}
