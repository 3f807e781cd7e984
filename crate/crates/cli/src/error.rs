use thiserror::Error;

/// Failure of a command, mapped to the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("data format error: {0}")]
    Data(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] oamtomo::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Spec(_) => 2,
            CliError::Data(_) => 3,
            CliError::NotConverged(_) => 4,
            CliError::Io(_) | CliError::Core(_) => 1,
        }
    }

    /// Wraps a core error raised while reading an input file.
    pub(crate) fn data(path: &std::path::Path, e: oamtomo::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}
