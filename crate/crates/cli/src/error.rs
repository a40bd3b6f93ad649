use thiserror::Error;

/// Failures of a command, split by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or inconsistent inputs. Exit status 2.
    #[error(transparent)]
    Core(#[from] hoverpost_core::Error),
    #[error("{0}")]
    Input(String),
    /// A check ran but its result is outside tolerance. Exit status 1.
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Core(_) | CliError::Input(_) => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
