//! Error taxonomy shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Text could not be parsed into an expression. `offset` is a byte offset
    /// into the source string.
    #[error("parse error at byte {offset}: {message}")]
    Parse { message: String, offset: usize },

    /// An evaluation left the mathematical domain (sqrt of a negative,
    /// log of a non-positive, division by zero, ...). `context` carries the
    /// offending subexpression.
    #[error("domain error in `{context}`: {message}")]
    Domain { context: String, message: String },

    /// A point failed a system's admissibility guard.
    #[error("guard violation: {0}")]
    Guard(String),

    /// A computation produced NaN or infinity.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A caller broke an operation's contract (wrong degree, non-closed loop,
    /// mismatched dimensions, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A linear solve or Newton inversion hit a (near-)singular operator.
    #[error("regularity failure: {message} (condition estimate {condition:.3e})")]
    Regularity { message: String, condition: f64 },

    /// Construction-time validation of a chart, bundle or lift failed.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unknown system id `{0}`")]
    UnknownSystem(String),

    #[error("missing parameter `{0}`")]
    MissingParam(String),

    /// An integration failed (step size underflow, max steps, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
