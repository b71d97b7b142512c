use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error(transparent)]
    Engine(#[from] riskgrad::Error),
    #[error("verdict failed: {0}")]
    Verdict(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 2 configuration, 3 runtime, 4 failed study verdict.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Engine(riskgrad::Error::Config(_)) => 2,
            CliError::Engine(_) | CliError::Io { .. } | CliError::Csv { .. } => 3,
            CliError::Verdict(_) => 4,
        }
    }
}
