//! Error type shared by every module of the library.
//!
//! The variants mirror how callers are expected to react: argument and
//! dimension errors are caller bugs, numeric errors report a failed or
//! ill-conditioned computation together with enough context to diagnose it,
//! and resource errors signal that a requested problem size exceeds a
//! deliberate cap rather than an inherent limit.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Two inputs that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A numeric computation failed or left its reliable regime
    /// (overflow, breakdown of an iteration, loss of positive definiteness).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The request exceeds a built-in resource cap (memory or time guard).
    #[error("resource cap exceeded: {0}")]
    Resource(String),

    /// Underlying I/O failed while reading or writing an artifact.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// An artifact on disk is malformed or of an unsupported version.
    #[error("format error: {0}")]
    Format(String),
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand constructor for [`Error::Argument`].
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Shorthand constructor for [`Error::Dimension`].
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// Shorthand constructor for [`Error::Numeric`].
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Shorthand constructor for [`Error::Resource`].
    pub fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }

    /// Shorthand constructor for [`Error::Format`].
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
