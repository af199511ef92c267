use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors of the std layer. Each maps to one process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Model(#[from] xrram_core::Error),
    #[error("yield below floor: {0}")]
    Yield(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Model(_) => 1,
            CliError::Yield(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } => 3,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, msg: impl std::fmt::Display) -> Self {
        CliError::Format { path: path.to_path_buf(), msg: msg.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
