//! Reference predictors: Last Value, linear and ridge regression on the
//! flattened input, and a plain MLP.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::autoencoder::flatten_batch;
use crate::ingest::{CareerSequence, Dataset};
use crate::linalg::cholesky_solve;
use crate::nn::serial::{stack_from_layers, stack_to_layers, ModelDocument};
use crate::nn::{train_loop, Dense, Layer, Sequential, TrainConfig, TrainOutcome};
use crate::rng::{substream, PipelineRng};
use crate::{Error, Result, Scalar, TARGET_SEASONS};

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;
pub const MLP_WIDTHS: [usize; 2] = [64, 32];
pub const MLP_KIND: &str = "baseline-mlp";

/// Repeats the raw age-28 BPM for all three target seasons.
pub fn last_value_predict(seq: &CareerSequence) -> [f64; 3] {
    [seq.last_bpm; 3]
}

/// Affine map from a flattened career to the three targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<T> {
    /// `features × 3`
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub lambda: f64,
}

/// Closed-form least squares with an L2 penalty `lambda·‖W‖²` on the
/// weights only. The bias is fitted through an appended column of ones.
pub fn linear_fit<T: Scalar>(x: ArrayView2<T>, y: ArrayView2<T>, lambda: f64) -> Result<LinearModel<T>> {
    let (n, f) = x.dim();
    if n == 0 {
        return Err(Error::Parameter("linear fit needs at least one row".into()));
    }
    if y.nrows() != n {
        return Err(Error::shape(n, y.nrows()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let mut aug = Array2::<T>::ones((n, f + 1));
    aug.slice_mut(ndarray::s![.., ..f]).assign(&x);
    let mut gram = aug.t().dot(&aug);
    for i in 0..f {
        gram[[i, i]] += T::of(lambda);
    }
    let rhs = aug.t().dot(&y);
    let solution = cholesky_solve(gram.view(), rhs.view())?;
    Ok(LinearModel {
        weights: solution.slice(ndarray::s![..f, ..]).to_owned(),
        bias: solution.row(f).to_owned(),
        lambda,
    })
}

impl<T: Scalar> LinearModel<T> {
    pub fn predict(&self, flat: ArrayView1<T>) -> Result<Array1<T>> {
        if flat.len() != self.weights.nrows() {
            return Err(Error::shape(self.weights.nrows(), flat.len()));
        }
        Ok(flat.dot(&self.weights) + &self.bias)
    }

    pub fn predict_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        if x.ncols() != self.weights.nrows() {
            return Err(Error::shape(self.weights.nrows(), x.ncols()));
        }
        Ok(x.dot(&self.weights) + self.bias.view().insert_axis(Axis(0)))
    }

    /// Squared error plus the weight penalty.
    pub fn objective(&self, x: ArrayView2<T>, y: ArrayView2<T>) -> Result<T> {
        let resid = self.predict_batch(x)? - y;
        let penalty = T::of(self.lambda) * self.weights.iter().map(|&w| w * w).sum::<T>();
        Ok(resid.iter().map(|&r| r * r).sum::<T>() + penalty)
    }
}

/// Fits on the training split's flattened inputs.
pub fn linear_fit_dataset<T: Scalar>(dataset: &Dataset, lambda: f64) -> Result<LinearModel<T>> {
    let x = flatten_batch::<T>(&dataset.train);
    let y = crate::forecaster::target_matrix::<T>(&dataset.train);
    linear_fit(x.view(), y.view(), lambda)
}

pub fn linear_predict_all<T: Scalar>(model: &LinearModel<T>, seqs: &[CareerSequence]) -> Result<BTreeMap<String, [f64; 3]>> {
    let out = model.predict_batch(flatten_batch::<T>(seqs).view())?;
    Ok(keyed(seqs, &out))
}

pub(crate) fn keyed<T: Scalar>(seqs: &[CareerSequence], out: &Array2<T>) -> BTreeMap<String, [f64; 3]> {
    seqs.iter()
        .zip(out.rows())
        .map(|(s, r)| (s.player_id.clone(), [r[0].as_f64(), r[1].as_f64(), r[2].as_f64()]))
        .collect()
}

/// Dense `in→64→32→3` with ReLU between layers.
pub fn mlp_new<T: Scalar>(input_dim: usize, rng: &mut PipelineRng) -> Sequential<T> {
    Sequential::new(vec![
        Layer::Dense(Dense::glorot(input_dim, MLP_WIDTHS[0], rng)),
        Layer::Relu,
        Layer::Dense(Dense::glorot(MLP_WIDTHS[0], MLP_WIDTHS[1], rng)),
        Layer::Relu,
        Layer::Dense(Dense::glorot(MLP_WIDTHS[1], TARGET_SEASONS, rng)),
    ])
    .expect("consistent widths")
}

pub fn mlp_baseline_train<T: Scalar>(dataset: &Dataset, config: &TrainConfig) -> Result<(Sequential<T>, TrainOutcome)> {
    if dataset.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let x = flatten_batch::<T>(&dataset.train);
    let y = crate::forecaster::target_matrix::<T>(&dataset.train);
    let mut model = mlp_new(x.ncols(), &mut substream(config.seed, "mlp/init"));
    let outcome = train_loop(&mut model, &x, &y, config)?;
    Ok((model, outcome))
}

pub fn mlp_predict_all<T: Scalar>(model: &Sequential<T>, seqs: &[CareerSequence]) -> Result<BTreeMap<String, [f64; 3]>> {
    let out = model.forward_infer(flatten_batch::<T>(seqs).view())?;
    Ok(keyed(seqs, &out))
}

pub fn mlp_to_document<T: Scalar>(model: &Sequential<T>, meta: BTreeMap<String, String>) -> ModelDocument {
    ModelDocument::new(MLP_KIND, meta, stack_to_layers("mlp", model))
}

pub fn mlp_from_document<T: Scalar>(doc: &ModelDocument) -> Result<Sequential<T>> {
    doc.expect_kind(MLP_KIND)?;
    let model = stack_from_layers("mlp", &doc.layers)?;
    if model.out_dim() != TARGET_SEASONS {
        return Err(Error::shape(TARGET_SEASONS, model.out_dim()));
    }
    Ok(model)
}
