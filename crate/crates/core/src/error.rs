use std::fmt::Debug;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("input header is missing required column `{0}`")]
    MissingColumn(String),

    #[error("input file is empty: no eligible players")]
    EmptyFile,

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("cannot impute `{feature}` at age {age}: no observed value available")]
    Imputation { feature: String, age: u32 },

    #[error("split error: {0}")]
    Split(String),

    #[error("rank-deficient normal equations; use a ridge lambda > 0")]
    RankDeficient,

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(expected: impl Debug, actual: impl Debug) -> Self {
        Error::Shape {
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
