use bsnf_core::Error;

/// Failures, each with its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Core(Error::Input(_) | Error::Syntax { .. }) => 2,
            CliError::Core(Error::Resource(_) | Error::Overflow(_) | Error::Inconsistent(_)) => 3,
        }
    }
}
