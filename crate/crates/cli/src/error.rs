use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Numerical(#[from] crossbar_core::Error),

    #[error("run failed: {0}")]
    RunFailed(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit status: 1 usage, 2 numerical or I/O failure, 3 certification.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Certification(_) => 3,
            CliError::Numerical(_)
            | CliError::RunFailed(_)
            | CliError::Io(_)
            | CliError::Json(_) => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
