//! Crate-wide error type.
//!
//! Every fallible operation in the crate returns [`Result`]. Numerical code
//! never panics on bad input: shape mismatches, non-finite values, singular
//! systems, and malformed data files all surface as typed errors.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible matrix shapes for an operation. The message names both
    /// shapes so the failing call site is identifiable from the error alone.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: String, detail: String },

    /// An operation produced (or was handed) a NaN or infinity.
    #[error("non-finite value in {op}")]
    NonFinite { op: String },

    /// A pseudo-inverse was requested with alpha = 0 on a rank-deficient
    /// matrix. Retry with a positive ridge coefficient.
    #[error("singular system in {context}: matrix is rank-deficient (relative tolerance {tol:.1e}); pass a positive ridge coefficient alpha to regularize")]
    Singular { context: String, tol: f64 },

    /// Invalid configuration (bad dimensions, out-of-range hyperparameters,
    /// inconsistent algorithm/batch combinations).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed dataset or checkpoint file. Carries the byte offset at
    /// which parsing failed.
    #[error("format error in {file} at byte {offset}: {detail}")]
    Format {
        file: String,
        offset: u64,
        detail: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(op: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            op: op.into(),
            detail: detail.into(),
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(file: impl Into<String>, offset: u64, detail: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            offset,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
