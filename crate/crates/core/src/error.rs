//! Shared error type for the core library.

/// Errors raised by the core library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes or lengths do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A configuration value is out of its admissible range.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// An operation was called in a state that does not support it
    /// (e.g. backward without a cached forward, step after episode end).
    #[error("invalid state: {0}")]
    State(String),
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A NaN or infinity showed up where finite values are required.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A serialized file is malformed; `offset` is the byte position of the
    /// first inconsistency.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
