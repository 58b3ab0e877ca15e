//! Error type shared across the library.
//!
//! Variants are grouped by how a caller should react (and how the CLI maps
//! them to exit codes): configuration mistakes, bad input data, and numerical
//! failures during training or evaluation.

use std::path::PathBuf;

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum CwmError {
    /// Invalid configuration or arguments (CLI exit code 1).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed, missing, or inconsistent data (CLI exit code 2).
    #[error("data error: {0}")]
    Data(String),

    /// I/O failure while touching `path` (CLI exit code 2).
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// CSV read/write failure on `path` (CLI exit code 2).
    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    /// JSON (de)serialization failure on `path` (CLI exit code 2).
    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// Numerical failure: divergence, domain violations, degenerate
    /// statistics (CLI exit code 3).
    #[error("numerical error: {0}")]
    Numerical(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, CwmError>;

impl CwmError {
    /// Process exit code the CLI should report for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CwmError::Config(_) => 1,
            CwmError::Data(_) | CwmError::Io { .. } | CwmError::Csv { .. } | CwmError::Json { .. } => 2,
            CwmError::Numerical(_) => 3,
        }
    }
}
