use std::io;
use std::path::PathBuf;

use thiserror::Error;
use tfsmc::SmcError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Estimator(SmcError),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },

    #[error("all {0} rows failed")]
    AllFailed(usize),

    #[error("{failed} of {total} rows failed")]
    PartialFailure { failed: usize, total: usize },

    #[error("{0} validation checks failed")]
    Validation(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Estimator(e) if e.is_degeneracy() => 3,
            CliError::AllFailed(_) => 3,
            CliError::Estimator(_) => 2,
            CliError::PartialFailure { .. } => 4,
            CliError::Io { .. } | CliError::Csv { .. } | CliError::Validation(_) => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Csv { path, source }
    }
}

impl From<SmcError> for CliError {
    fn from(e: SmcError) -> Self {
        match e {
            SmcError::InvalidConfig(m) | SmcError::InvalidModel(m) => CliError::Config(m),
            e @ SmcError::TimeOutOfRange { .. } => CliError::Config(e.to_string()),
            e => CliError::Estimator(e),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
