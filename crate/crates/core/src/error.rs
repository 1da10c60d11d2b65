use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or dataset shapes do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A class, user or session label falls outside its declared range.
    #[error("label error: {0}")]
    Label(String),

    /// A hyperparameter or argument is outside its valid domain.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An API contract was violated by the caller (e.g. backward from a non-scalar).
    #[error("contract error: {0}")]
    Contract(String),

    /// NaN or infinity showed up where finite values are required.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Bad magic, unsupported version or otherwise unrecognized file layout.
    #[error("format error: {0}")]
    Format(String),

    /// Truncated file or checksum mismatch.
    #[error("corrupt file: {0}")]
    Corruption(String),

    /// File decoded but its contents violate dataset invariants.
    #[error("validation error: {0}")]
    Validation(String),

    /// The experiment protocol cannot run on the given data.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn label(msg: impl Into<String>) -> Self {
        Error::Label(msg.into())
    }
}
