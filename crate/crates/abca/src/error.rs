use std::path::PathBuf;

use abca_core::BackendError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid mock script: {0}")]
    Script(String),
    #[error("cache entry {key}: {reason}")]
    Cache { key: String, reason: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] abca_core::Error),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
