use std::fmt;

use robust_wald::Error;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// A failed run: exit code, the stage that failed and a message.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: u8,
    pub stage: String,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            stage: "arguments".into(),
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DATA,
            stage: "data".into(),
            message: message.into(),
        }
    }

    pub fn output(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DATA,
            stage: "output".into(),
            message: message.into(),
        }
    }

    /// Library error raised while `stage` ran.
    pub fn compute(stage: impl Into<String>, err: Error) -> Self {
        Failure {
            code: if err.is_input_error() { EXIT_DATA } else { EXIT_NUMERICAL },
            stage: stage.into(),
            message: err.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error in {}: {}", self.stage, self.message)
    }
}

/// Attaches a stage to library results.
pub trait Stage<T> {
    fn stage(self, stage: &str) -> Result<T, Failure>;
}

impl<T> Stage<T> for robust_wald::Result<T> {
    fn stage(self, stage: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure::compute(stage, e))
    }
}
