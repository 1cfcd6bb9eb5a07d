use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Validation failures carry the offending field so the command-line layer
/// can point at the config entry that caused them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{field}: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("negative density {value:e} in cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },

    #[error("grid mismatch: {left} cells vs {right} cells")]
    GridMismatch { left: usize, right: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 1 for validation problems, 2 for numerical or
    /// output failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::Config(_) | Error::GridMismatch { .. } => 1,
            Error::CflViolation { .. } | Error::NegativeDensity { .. } | Error::Numerical(_) => 2,
            Error::Io { .. } | Error::Csv { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
