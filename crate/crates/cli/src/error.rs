use std::path::{Path, PathBuf};
use thiserror::Error;

/// Failures of a command, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{failed} of {total} dataset(s) failed")]
    PartialFailure { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::PartialFailure { .. } => 4,
        }
    }

    pub fn config(message: impl std::fmt::Display) -> Self {
        CliError::Config(message.to_string())
    }

    /// Data error with the dataset and processing stage it happened in.
    pub fn data(
        context: impl std::fmt::Display,
        stage: &str,
        message: impl std::fmt::Display,
    ) -> Self {
        CliError::Data(format!("{context}: {stage}: {message}"))
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
