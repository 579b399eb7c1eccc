use std::fmt;

use net2rdm_core::Error;

/// A failure reported as one `CODE: message` line on stderr.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    pub fn args(message: impl Into<String>) -> Self {
        CliError::new("E_ARGS", message)
    }

    /// 2 for broken internal invariants, 1 for everything the user can fix.
    pub fn exit_code(&self) -> i32 {
        if self.code == "E_INTERNAL" {
            2
        } else {
            1
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::new(e.code(), e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_line = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        write!(f, "{}: {}", self.code, one_line)
    }
}

pub type CliResult<T> = Result<T, CliError>;
