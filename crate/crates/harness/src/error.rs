use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(dgsam_core::Error),
    #[error("check failed: {0}")]
    Failed(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            HarnessError::Failed(_) => 1,
            HarnessError::Config(_) | HarnessError::Io(_) => 2,
            HarnessError::Numerical(_) => 3,
        })
    }
}

impl From<dgsam_core::Error> for HarnessError {
    fn from(e: dgsam_core::Error) -> Self {
        use dgsam_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::DimensionMismatch { .. } | E::BatchTooLarge { .. } => {
                HarnessError::Config(e.to_string())
            }
            other => HarnessError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}
