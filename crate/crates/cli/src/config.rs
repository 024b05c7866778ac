//! Pipeline configuration: a JSON file whose every field can be overridden
//! from the command line.

use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use careertrend::clustering::{DEFAULT_MAX_ITERS, DEFAULT_RESTARTS};
use careertrend::nn::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Baselines {
    pub last_value: bool,
    pub linear: bool,
    pub ridge: bool,
    pub mlp: bool,
}

impl Default for Baselines {
    fn default() -> Self {
        Self { last_value: true, linear: true, ridge: true, mlp: true }
    }
}

/// Everything a run depends on. `seed` replaces the `seed` of each training block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Season CSV read by `ingest`.
    pub input: Option<PathBuf>,
    /// Feature schema JSON; the built-in 48-feature schema when absent.
    pub schema: Option<PathBuf>,
    /// Artifact directory.
    pub out: PathBuf,
    pub seed: u64,
    pub test_fraction: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub kmeans_restarts: usize,
    pub kmeans_max_iters: usize,
    pub autoencoder: TrainConfig,
    pub forecaster: TrainConfig,
    pub mlp: TrainConfig,
    pub baselines: Baselines,
    pub ridge_lambda: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            schema: None,
            out: PathBuf::from("out"),
            seed: 0,
            test_fraction: 36.0 / 177.0,
            k_min: 2,
            k_max: 8,
            kmeans_restarts: DEFAULT_RESTARTS,
            kmeans_max_iters: DEFAULT_MAX_ITERS,
            autoencoder: TrainConfig::default(),
            forecaster: TrainConfig::default(),
            mlp: TrainConfig::default(),
            baselines: Baselines::default(),
            ridge_lambda: careertrend::baselines::DEFAULT_RIDGE_LAMBDA,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CliError::Usage(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        if self.k_min < 2 || self.k_max < self.k_min {
            return Err(CliError::Usage(format!("k range {}..={} is invalid; need 2 <= k_min <= k_max", self.k_min, self.k_max)));
        }
        if self.kmeans_restarts == 0 || self.kmeans_max_iters == 0 {
            return Err(CliError::Usage("kmeans_restarts and kmeans_max_iters must be positive".into()));
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(CliError::Usage(format!("ridge_lambda must be >= 0, got {}", self.ridge_lambda)));
        }
        for (name, block) in [("autoencoder", &self.autoencoder), ("forecaster", &self.forecaster), ("mlp", &self.mlp)] {
            block.validate().map_err(|e| CliError::Usage(format!("{name}: {e}")))?;
        }
        Ok(())
    }

    pub fn k_range(&self) -> RangeInclusive<usize> {
        self.k_min..=self.k_max
    }

    /// A training block with the global seed applied.
    pub fn seeded(&self, block: &TrainConfig) -> TrainConfig {
        TrainConfig { seed: self.seed, ..block.clone() }
    }

    pub fn schema(&self) -> Result<careertrend::ingest::FeatureSchema, CliError> {
        Ok(match &self.schema {
            Some(p) => careertrend::ingest::FeatureSchema::load(p)?,
            None => careertrend::ingest::FeatureSchema::nba48(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"seed": 5, "forecaster": {"max_epochs": 3}}"#).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.forecaster.max_epochs, 3);
        assert_eq!(c.forecaster.batch_size, 32);
        assert_eq!(c.k_max, 8);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 5}"#).is_err());
    }

    #[test]
    fn bad_ranges_rejected() {
        let c = PipelineConfig { k_min: 1, ..Default::default() };
        assert!(c.validate().is_err());
        let c = PipelineConfig { test_fraction: 1.0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
