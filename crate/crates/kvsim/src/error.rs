use std::path::PathBuf;

use kvsim_core::probe::ProbeError;
use kvsim_core::workload::WorkloadError;
use kvsim_core::ConfigError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Probe(#[from] ProbeError),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        CliError::Parse {
            path: path.into(),
            msg: msg.to_string(),
        }
    }

    /// 0 ok, 2 configuration or IO, 3 training data coverage.
    pub fn exit_code(&self) -> u8 {
        let coverage = |e: &ProbeError| {
            matches!(
                e,
                ProbeError::InsufficientCoverage { .. } | ProbeError::InsufficientSamples { .. }
            )
        };
        match self {
            CliError::Probe(e) | CliError::Config(ConfigError::Probe(e)) if coverage(e) => 3,
            _ => 2,
        }
    }
}

impl From<WorkloadError> for CliError {
    fn from(e: WorkloadError) -> Self {
        CliError::Config(ConfigError::Workload(e))
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
