use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures of a CLI command, mapped onto process exit codes.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    /// Malformed or mismatched input files.
    #[error("invalid input: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io { path: path.to_path_buf(), source }
    }

    /// 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

impl From<epinn_core::Error> for AppError {
    fn from(e: epinn_core::Error) -> Self {
        if e.is_numerical() {
            AppError::Numerical(e.to_string())
        } else {
            AppError::Data(e.to_string())
        }
    }
}
