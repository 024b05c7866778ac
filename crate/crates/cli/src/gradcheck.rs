//! Finite-difference checks over every trainable building block.

use std::time::Instant;

use careertrend::autoencoder::AutoencoderModel;
use careertrend::baselines::mlp_new;
use careertrend::forecaster::{ForecasterModel, SeqBatch};
use careertrend::nn::{grad_check_sampled, BatchNorm, Dense, Dropout, GradCheckReport, Layer, Network, Sequential};
use careertrend::rng::{substream, PipelineRng};
use careertrend::{Result, INPUT_SEASONS};
use ndarray::{Array2, Array3};
use rand::Rng;
use serde::Serialize;

/// Tolerance for stacks with no nonlinearity.
pub const LINEAR_TOLERANCE: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;
const EPS: f64 = 1e-6;
const BATCH: usize = 4;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckRow {
    pub config: &'static str,
    pub seed: u64,
    pub max_relative_error: f64,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

fn uniform(shape: (usize, usize), rng: &mut PipelineRng) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(-1.0..1.0))
}

fn sequences(batch: usize, features: usize, k: usize, rng: &mut PipelineRng) -> SeqBatch<f64> {
    let sequences = Array3::from_shape_simple_fn((batch, INPUT_SEASONS, features), || rng.random_range(-1.0..1.0));
    let conditioning = Array2::from_shape_fn((batch, k), |(i, j)| if i % k.max(1) == j { 1.0 } else { 0.0 });
    SeqBatch { sequences, conditioning }
}

/// Zero-initialised biases put ReLU inputs exactly on the kink whenever a
/// whole upstream row is dead; nudging every parameter avoids checking there.
fn jitter<N: Network<f64>>(mut model: N, rng: &mut PipelineRng) -> N {
    for p in model.params_mut() {
        for v in p.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    model
}

fn row<N: Network<f64>>(
    config: &'static str,
    seed: u64,
    tolerance: f64,
    model: &N,
    input: &N::Input,
    target: &Array2<f64>,
    per_tensor: Option<usize>,
) -> Result<GradCheckRow> {
    let model = jitter(model.clone(), &mut substream(seed, &format!("gradcheck/jitter/{config}")));
    let GradCheckReport { max_relative_error, checked, .. } =
        grad_check_sampled(&model, input, target, EPS, seed, per_tensor)?;
    Ok(GradCheckRow {
        config,
        seed,
        max_relative_error,
        checked,
        tolerance,
        passed: max_relative_error < tolerance,
    })
}

/// All configurations for one seed. Small models are checked on every
/// coordinate; production-width models on a sample of each tensor.
pub fn check_seed(seed: u64) -> Result<Vec<GradCheckRow>> {
    let rng = &mut substream(seed, "gradcheck/models");
    let mut rows = Vec::new();

    let dense = Sequential::new(vec![Layer::Dense(Dense::glorot(6, 3, rng))])?;
    let x = uniform((BATCH, 6), rng);
    let y = uniform((BATCH, 3), rng);
    rows.push(row("dense", seed, LINEAR_TOLERANCE, &dense, &x, &y, None)?);

    let dropout_off = Sequential::new(vec![
        Layer::Dense(Dense::glorot(6, 5, rng)),
        Layer::Dropout(Dropout::new(0.0)?),
        Layer::Dense(Dense::glorot(5, 3, rng)),
    ])?;
    rows.push(row("dropout-off", seed, LINEAR_TOLERANCE, &dropout_off, &x, &y, None)?);

    let batchnorm = Sequential::new(vec![
        Layer::Dense(Dense::glorot(6, 5, rng)),
        Layer::BatchNorm(BatchNorm::new(5)),
        Layer::Dense(Dense::glorot(5, 3, rng)),
    ])?;
    rows.push(row("batchnorm", seed, TOLERANCE, &batchnorm, &x, &y, None)?);

    let lstm = ForecasterModel::<f64>::with_dims(5, 6, 0, rng);
    let s = sequences(BATCH, 5, 0, rng);
    rows.push(row("lstm-7step", seed, TOLERANCE, &lstm, &s, &y, None)?);

    let ae = AutoencoderModel::<f64>::with_dims(12, 8, 4, rng);
    let xa = uniform((BATCH, 12), rng);
    rows.push(row("autoencoder", seed, TOLERANCE, &ae, &xa, &xa, None)?);

    let fc = ForecasterModel::<f64>::with_dims(5, 6, 2, rng);
    let s2 = sequences(BATCH, 5, 2, rng);
    rows.push(row("forecaster", seed, TOLERANCE, &fc, &s2, &y, None)?);

    let mlp = mlp_new::<f64>(12, rng);
    rows.push(row("mlp", seed, TOLERANCE, &mlp, &xa, &y, None)?);

    let ae_full = AutoencoderModel::<f64>::new(336, rng);
    let xf = uniform((BATCH, 336), rng);
    rows.push(row("autoencoder-336", seed, TOLERANCE, &ae_full, &xf, &xf, Some(4))?);

    let fc_full = ForecasterModel::<f64>::new(48, 2, rng);
    let sf = sequences(BATCH, 48, 2, rng);
    rows.push(row("forecaster-48x64", seed, TOLERANCE, &fc_full, &sf, &y, Some(4))?);

    let mlp_full = mlp_new::<f64>(336, rng);
    rows.push(row("mlp-336", seed, TOLERANCE, &mlp_full, &xf, &y, Some(4))?);

    Ok(rows)
}

/// Runs seeds `0..seeds`; returns every row and the elapsed wall time.
pub fn run(seeds: u64) -> Result<(Vec<GradCheckRow>, std::time::Duration)> {
    let start = Instant::now();
    let mut rows = Vec::new();
    for seed in 0..seeds {
        rows.extend(check_seed(seed)?);
    }
    Ok((rows, start.elapsed()))
}
