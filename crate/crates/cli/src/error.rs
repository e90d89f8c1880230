use std::fmt;

use egopose::Error;

/// Process exit codes.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;
pub const EXIT_EVALUATION: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn evaluation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_EVALUATION,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Maps a library error to an exit code. Malformed files and I/O failures
/// are usage errors wherever they occur; `stage` is the code for everything
/// else.
pub fn classify(e: Error, stage: i32) -> CliError {
    let code = match &e {
        Error::Parse { .. } | Error::Schema { .. } | Error::Io { .. } | Error::Checkpoint(_) => EXIT_USAGE,
        Error::Divergence { .. } => EXIT_TRAINING,
        _ => stage,
    };
    CliError {
        code,
        message: e.to_string(),
    }
}

pub trait Stage<T> {
    /// Errors from reading inputs.
    fn or_usage(self) -> Result<T, CliError>;
    fn or_training(self) -> Result<T, CliError>;
    fn or_evaluation(self) -> Result<T, CliError>;
}

impl<T> Stage<T> for Result<T, Error> {
    fn or_usage(self) -> Result<T, CliError> {
        self.map_err(|e| classify(e, EXIT_USAGE))
    }

    fn or_training(self) -> Result<T, CliError> {
        self.map_err(|e| classify(e, EXIT_TRAINING))
    }

    fn or_evaluation(self) -> Result<T, CliError> {
        self.map_err(|e| classify(e, EXIT_EVALUATION))
    }
}
