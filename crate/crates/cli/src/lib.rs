//! File-based orchestration of the gridrisk pipeline.

pub mod artifact;
pub mod config;
pub mod report;
pub mod stages;

use std::path::PathBuf;

pub use config::{FoldChoice, PipelineConfig};
pub use stages::{run, Stage};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing artifact: {}", .0.display())]
    Missing(PathBuf),

    #[error("{} was produced by config {found}, current config is {expected}; rerun the upstream stages", path.display())]
    HashMismatch { path: PathBuf, found: String, expected: String },

    #[error(transparent)]
    Core(#[from] gridrisk::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    /// 0 ok, 1 invalid config or input, 2 missing artifact, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Missing(_) => 2,
            CliError::Core(gridrisk::Error::Numeric(_) | gridrisk::Error::NonFinite(_)) => 3,
            _ => 1,
        }
    }
}

/// Runs the stages in order, stopping at the first failure.
pub fn run_all(stages: &[Stage], cfg: &PipelineConfig) -> Result<(), CliError> {
    stages.iter().try_for_each(|&s| run(s, cfg))
}
