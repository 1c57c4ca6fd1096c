use sgcvq_core::Error as CoreError;
use thiserror::Error;

pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("{context}: {message}")]
    Io { context: String, message: String },

    #[error("numerical failure at step {step}: {source}")]
    Numerical { step: u64, source: CoreError },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => EXIT_INVALID_CONFIG,
            HarnessError::Io { .. } => EXIT_IO,
            HarnessError::Numerical { .. } => EXIT_NUMERICAL,
        }
    }

    pub fn io(context: impl Into<String>, err: impl std::fmt::Display) -> HarnessError {
        HarnessError::Io {
            context: context.into(),
            message: err.to_string(),
        }
    }

    /// Classifies an engine error raised outside the training loop.
    pub fn from_core(context: &str, err: CoreError) -> HarnessError {
        match err {
            CoreError::Io(e) => HarnessError::io(context, e),
            e @ (CoreError::Truncated
            | CoreError::Checksum { .. }
            | CoreError::VersionMismatch { .. }
            | CoreError::Format(_)) => HarnessError::io(context, e),
            e @ CoreError::NonFinite(_) => HarnessError::Numerical { step: 0, source: e },
            e => HarnessError::Config(format!("{context}: {e}")),
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
