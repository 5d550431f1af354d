//! Error taxonomy shared by every module.
//!
//! Config and shape problems are caught before any compute; domain and
//! numeric errors can surface mid-run and abort it.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value. The message names the offending key.
    #[error("config error: {0}")]
    Config(String),

    /// A point left the mathematical domain of an objective.
    #[error("domain error: {0}")]
    Domain(String),

    /// Tensor shape signatures disagree.
    #[error("signature error: expected layer sizes {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    /// A NaN or infinity appeared where a finite value is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code contract: 2 for config/validation problems, 3 for
    /// numeric/runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::ShapeMismatch { .. } => 2,
            _ => 3,
        }
    }
}
