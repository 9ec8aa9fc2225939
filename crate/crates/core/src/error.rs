use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("sample id must be non-empty")]
    EmptyId,

    #[error("not enough samples: {required} required, {available} available")]
    InsufficientSamples { required: usize, available: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("histogram length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("histogram at stage {actual:?}, expected {expected:?}")]
    WrongStage {
        expected: crate::dp_histogram::Stage,
        actual: crate::dp_histogram::Stage,
    },

    #[error("{0}")]
    EmptyCorpus(String),

    #[error("accountant: {0}")]
    Accountant(String),

    #[error("expansion slot {slot} exhausted its retry budget of {retries}")]
    RetryExhausted { slot: usize, retries: usize },

    #[error("sidecar transport error: {0}")]
    Transport(String),

    #[error("sidecar protocol error: {0}")]
    Protocol(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
