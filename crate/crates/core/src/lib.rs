//! Two-stage career-trend forecasting.
//!
//! Stage one compresses each player's seven development seasons into a
//! 64-dimensional embedding with an autoencoder and groups the embeddings
//! with k-means; stage two feeds the raw season sequence plus the one-hot
//! cluster label into an LSTM that predicts Box Plus/Minus for the three
//! following seasons. Baselines, metrics and a synthetic career generator
//! round out the evaluation harness.
//!
//! The numerical modules are generic over [`Scalar`] (`f32` or `f64`); the
//! data side (ingestion, datasets, reports) is fixed to `f64`. Concrete
//! double-precision aliases are re-exported at the crate root.

pub mod artifact;
pub mod autoencoder;
pub mod baselines;
pub mod clustering;
pub mod error;
pub mod eval;
pub mod forecaster;
pub mod ingest;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Number of development seasons fed to both stages (ages 22 through 28).
pub const INPUT_SEASONS: usize = 7;
/// Number of predicted seasons (ages 29 through 31).
pub const TARGET_SEASONS: usize = 3;
/// First input age.
pub const FIRST_INPUT_AGE: u32 = 22;
/// Ages whose BPM forms the prediction target.
pub const TARGET_AGES: [u32; TARGET_SEASONS] = [29, 30, 31];

pub type AutoencoderModel = autoencoder::AutoencoderModel<f64>;
pub type ClusterModel = clustering::ClusterModel<f64>;
pub type ForecasterModel = forecaster::ForecasterModel<f64>;
pub type LinearModel = baselines::LinearModel<f64>;
pub type Sequential = nn::Sequential<f64>;
pub type Lstm = nn::Lstm<f64>;
pub type Adam = nn::Adam<f64>;
