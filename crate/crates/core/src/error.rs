use thiserror::Error;

pub type Result<T> = std::result::Result<T, SsipError>;

#[derive(Debug, Error)]
pub enum SsipError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A numerical failure inside a sampler sweep. `iteration` is `None` when
    /// the failure happened outside a chain (e.g. a direct call).
    #[error("numerical failure{}: {message}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numerical {
        iteration: Option<usize>,
        message: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0} not found in chain")]
    MissingStratum(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SsipError {
    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        SsipError::Numerical {
            iteration: None,
            message: message.into(),
        }
    }

    /// Attaches the sweep index to a numerical failure.
    pub(crate) fn at_iteration(self, it: usize) -> Self {
        match self {
            SsipError::Numerical { message, .. } => SsipError::Numerical {
                iteration: Some(it),
                message,
            },
            other => other,
        }
    }
}
