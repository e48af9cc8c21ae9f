//! Error-to-exit-code mapping for the command-line surface.
//!
//! Every failure leaves the process through one of three exits: usage
//! errors (bad flags, bad configuration) exit 2, data errors (unreadable
//! or malformed inputs, checkpoint mismatches) exit 3, and training aborts
//! exit 4. The first stderr line is always `error[<kind>]: <message>` so
//! wrappers can dispatch on it without parsing prose.

use incongruity::error::Error as CoreError;

/// Failure category, carrying the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage,
    Data,
    Train,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Usage => 2,
            ExitKind::Data => 3,
            ExitKind::Train => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ExitKind::Usage => "usage",
            ExitKind::Data => "data",
            ExitKind::Train => "training",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Usage,
            msg: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Data,
            msg: msg.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error[{}]: {}", self.kind.label(), self.msg)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        let kind = match err {
            CoreError::InvalidRatios { .. } | CoreError::InvalidConfig { .. } => ExitKind::Usage,
            CoreError::TrainingAborted { .. } => ExitKind::Train,
            _ => ExitKind::Data,
        };
        CliError {
            kind,
            msg: err.to_string(),
        }
    }
}

/// Prefix an error with the pipeline stage it happened in.
pub fn stage<T, E: Into<CliError>>(name: &str, result: Result<T, E>) -> Result<T> {
    result.map_err(|e| {
        let mut err = e.into();
        err.msg = format!("{name}: {}", err.msg);
        err
    })
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
