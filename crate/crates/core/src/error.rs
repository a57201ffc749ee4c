use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ItrError>;

#[derive(Debug, Error)]
pub enum ItrError {
    /// Bad caller-supplied data: unknown arms, non-finite values, bad propensities.
    #[error("input error: {0}")]
    Input(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    /// The hard-margin condition failed on the supplied sample.
    #[error("margin condition violated: {0}")]
    ConditionViolated(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ItrError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ItrError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for validation problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ItrError::Numeric(_) => 3,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ItrError::Input(_) => "input",
            ItrError::InvalidSpec(_) => "invalid_spec",
            ItrError::InvalidRequest(_) => "invalid_request",
            ItrError::Parse { .. } => "parse",
            ItrError::ConditionViolated(_) => "condition_violated",
            ItrError::Numeric(_) => "numeric",
            ItrError::Io { .. } => "io",
            ItrError::Json(_) => "json",
        }
    }
}
