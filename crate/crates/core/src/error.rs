use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A value object failed its construction-time invariants.
    #[error("validation error: {0}")]
    Validation(String),

    /// A caller supplied an argument outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Policy, environment, or training configuration are mutually incompatible.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// The operation is not defined for this kind of object.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Enumeration or unwinding would exceed a resource cap.
    #[error("resource limit exceeded: {what} reached {count} (cap {cap})")]
    Resource { what: String, count: usize, cap: usize },

    /// Malformed external data (price series, checkpoints).
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// Training produced NaN or infinite values.
    #[error("non-finite values at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Configuration(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
}
