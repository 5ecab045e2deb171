//! Error type shared by every module in the crate.
//!
//! Two failure classes matter to callers and they are kept distinct so that
//! front-ends can map them to different exit paths:
//!
//! * [`Error::Invalid`] — the caller handed us something malformed (wrong
//!   dimension, parameter out of range, state off its manifold). These are
//!   usage errors and are always detected before any numerics run.
//! * [`Error::NonFinite`] — a computation produced NaN or infinity. These are
//!   numeric failures; long-running drivers catch them, keep the partial
//!   results produced so far, and surface the message.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    /// Malformed input: dimension mismatch, out-of-range parameter, or a
    /// state vector violating a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A numeric operation produced a non-finite value. The payload says
    /// where (operation and, when known, the step index).
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl Error {
    /// Convenience constructor for [`Error::Invalid`].
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Convenience constructor for [`Error::NonFinite`].
    pub fn non_finite(msg: impl Into<String>) -> Self {
        Error::NonFinite(msg.into())
    }

    /// True when the error reports a numeric (NaN/inf) failure rather than a
    /// usage problem.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
