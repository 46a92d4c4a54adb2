use thiserror::Error;

/// Driver errors, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Anything wrong with the configuration or the command line.
    #[error("config error: {0}")]
    Config(String),
    /// A failure while simulating or evaluating.
    #[error("simulation error: {0}")]
    Compute(#[from] kacld::Error),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Compute(kacld::Error::Json(e))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
