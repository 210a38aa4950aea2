//! Error type shared across the library.

use thiserror::Error;

/// Errors produced by diarization, training, scoring and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector or matrix dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A matrix required to be symmetric positive definite is not,
    /// even after the ridge fallback.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// A non-finite value or other numerical breakdown was detected.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// On-disk data does not match the expected format.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
