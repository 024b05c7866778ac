//! Command implementations behind the `careertrend` binary. Kept in a library
//! so tests can drive whole pipeline runs without spawning processes.

pub mod commands;
pub mod config;
pub mod gradcheck;

pub use commands::{
    cmd_evaluate, cmd_gradcheck, cmd_ingest, cmd_predict, cmd_stage1, cmd_stage2, cmd_synth, ModelName,
    PredictSource, Stage1Summary, Stage2Summary,
};
pub use config::{Baselines, PipelineConfig};

use careertrend::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{file} not found in {dir}; run `careertrend {step}` first")]
    MissingArtifact { file: String, dir: String, step: String },

    #[error("{path}: {source}")]
    Input { path: String, source: Error },

    #[error("gradient check failed: {0}")]
    GradCheck(String),

    #[error(transparent)]
    Core(#[from] Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

fn core_exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) | Error::UndefinedMetric(_) | Error::RankDeficient => 3,
        Error::Config(_) | Error::Parameter(_) => 1,
        _ => 2,
    }
}

impl CliError {
    /// 1 usage, 2 data or artifact, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::MissingArtifact { .. } => 2,
            CliError::Input { source, .. } => core_exit_code(source).max(2),
            CliError::GradCheck(_) => 3,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}
