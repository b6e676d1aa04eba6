//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its invariants.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument to an operation violates its preconditions.
    #[error("argument error: {0}")]
    Argument(String),

    /// A file or document does not match the expected schema.
    #[error("format error: {0}")]
    Format(String),

    /// A non-finite value entered a numeric computation.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training diverged or otherwise failed.
    #[error("training error at epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },

    /// An operation was invoked on a world or model in the wrong state.
    #[error("state error: {0}")]
    State(String),

    /// An internal consistency check failed.
    #[error("internal error: {0}")]
    Internal(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
