//! Error type shared by all modules.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, ChemdimError>;

#[derive(Debug, Error)]
pub enum ChemdimError {
    /// Invalid argument or domain violation (bad shapes, out-of-range
    /// parameters, non-finite inputs).
    #[error("validation: {0}")]
    Validation(String),

    /// File or stream level failure.
    #[error("io: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed on-disk content (bad header, unparsable number, truncation).
    #[error("parse: {path}: {message}")]
    Parse { path: String, message: String },

    /// A numerical routine broke down (non-finite objective, failed
    /// decomposition).
    #[error("numerical: {0}")]
    Numerical(String),

    /// Semi-NMF produced a non-finite objective; carries the last state
    /// that was still valid so callers can inspect or salvage it.
    #[error("numerical: semi-NMF breakdown: {message}")]
    SemiNmfBreakdown {
        message: String,
        last: Box<crate::numerics::SemiNmfModel>,
    },
}

impl ChemdimError {
    pub fn validation(msg: impl Into<String>) -> Self {
        ChemdimError::Validation(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        ChemdimError::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        ChemdimError::Parse { path: path.into(), message: message.into() }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        ChemdimError::Numerical(msg.into())
    }
}
