use std::fmt;
use std::process::ExitCode;

use llcm_core::CoreError;

/// Command-level failure, split by exit code: numeric problems (NaN,
/// divergence) exit 1, everything the operator can fix in a config or
/// invocation exits 2.
#[derive(Debug)]
pub enum LabError {
    /// Bad invocation, unreadable/invalid config or input file.
    Usage(String),
    /// The math went wrong: divergence or non-finite values.
    Numeric(String),
}

impl LabError {
    pub fn usage(msg: impl Into<String>) -> LabError {
        LabError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            LabError::Usage(_) => ExitCode::from(2),
            LabError::Numeric(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for LabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabError::Usage(msg) => write!(f, "error: {msg}"),
            LabError::Numeric(msg) => write!(f, "numeric failure: {msg}"),
        }
    }
}

impl std::error::Error for LabError {}

impl From<CoreError> for LabError {
    fn from(e: CoreError) -> LabError {
        match e {
            CoreError::NonFinite(_) | CoreError::Diverged { .. } => {
                LabError::Numeric(e.to_string())
            }
            other => LabError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> LabError {
        LabError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> LabError {
        LabError::Usage(format!("JSON: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
