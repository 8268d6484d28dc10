//! Error type shared by every module in the crate.

use alloc::string::String;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, CoreError>;

/// All failure modes of the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Operand shapes do not line up; the message names the offending operand.
    Shape(String),
    /// A value that must be finite is NaN or infinite.
    NonFinite(String),
    /// A scalar argument is outside its mathematical domain.
    Domain(String),
    /// A configuration value violates its invariants.
    Config(String),
    /// The operation is not defined for this input kind.
    Unsupported(String),
    /// Training produced a non-finite loss at the given iteration.
    Diverged { iteration: usize, detail: String },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            CoreError::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            CoreError::Domain(msg) => write!(f, "domain error: {msg}"),
            CoreError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            CoreError::Unsupported(msg) => write!(f, "unsupported operation: {msg}"),
            CoreError::Diverged { iteration, detail } => {
                write!(f, "training diverged at iteration {iteration}: {detail}")
            }
        }
    }
}

impl core::error::Error for CoreError {}

impl CoreError {
    pub fn shape(msg: impl Into<String>) -> Self {
        CoreError::Shape(msg.into())
    }

    pub fn non_finite(msg: impl Into<String>) -> Self {
        CoreError::NonFinite(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        CoreError::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        CoreError::Unsupported(msg.into())
    }
}
