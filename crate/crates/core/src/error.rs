//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector or tensor has the wrong length for the operation.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// An argument violates the operation's contract.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A network spec or run configuration is unusable.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Activations or probabilities left the representable range.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A serialized container is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// Parsed pieces of a container disagree with each other.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// Oracle transport failed.
    #[error("transport error: {0}")]
    Transport(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
