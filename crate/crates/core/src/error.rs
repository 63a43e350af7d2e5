use std::io;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// Malformed or truncated input file.
    #[error("format error: {0}")]
    Format(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The training matrix has no non-zero column, so no scale can be fitted.
    #[error("degenerate normalization scale: maximum column norm is zero")]
    DegenerateScale,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// The closest-point projection is not defined at the given input.
    #[error("projection undefined: {0}")]
    UndefinedProjection(String),

    #[error("line search failed: {0}")]
    LineSearch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
