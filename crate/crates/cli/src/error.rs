use std::path::{Path, PathBuf};

use qis_core::QisError;
use thiserror::Error;

use crate::formats::FormatError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error(transparent)]
    Core(#[from] QisError),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, source: FormatError) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 usage, 2 I/O and format, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io { .. } | CliError::Format { .. } => 2,
            CliError::Core(e) => match e {
                QisError::Divergence { .. }
                | QisError::NonFinite { .. }
                | QisError::Saturated { .. }
                | QisError::RankDeficient(_) => 3,
                _ => 1,
            },
        }
    }
}
