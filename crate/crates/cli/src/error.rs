use ssip_core::SsipError;
use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot read config file {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },

    #[error("input {path} does not exist")]
    MissingInput { path: PathBuf },

    #[error("{path}: {source}")]
    Input { path: PathBuf, source: SsipError },

    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] SsipError),
}

impl CliError {
    /// Stable identifier used in the machine-readable error record.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::ConfigFile { .. } => "config",
            CliError::MissingInput { .. } => "missing_input",
            CliError::Input { .. } => "input",
            CliError::Output { .. } => "output",
            CliError::Core(SsipError::Numerical { .. }) => "numerical",
            CliError::Core(_) => "model",
        }
    }

    /// Validation problems are detected before any sampling starts.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ConfigFile { .. } | CliError::MissingInput { .. } | CliError::Input { .. } => 2,
            _ => 1,
        }
    }

    pub fn record(&self) -> serde_json::Value {
        serde_json::json!({
            "status": "error",
            "kind": self.kind(),
            "message": self.to_string(),
        })
    }
}

pub fn config(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}
