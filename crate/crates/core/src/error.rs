use std::io;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// Unrecognized container (bad magic, unsupported version or flags).
    #[error("format error: {0}")]
    Format(String),

    /// The container header was valid but the payload is short or malformed.
    #[error("corrupt file: {0}")]
    Corruption(String),

    /// Input violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Not enough samples for the requested operation.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// A sample id had no entry in a label, weight or reliability table.
    #[error("lookup error: no entry for id {0}")]
    Lookup(u64),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Wraps an error with the pipeline stage or config entry it came from.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips any `Context` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
