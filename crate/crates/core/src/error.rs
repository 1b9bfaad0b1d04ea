use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DivaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DivaError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("label `{0}` has no embedding")]
    OutOfVocabulary(String),

    #[error("song `{0}` has no in-vocabulary tokens")]
    EmptyDocument(String),

    #[error("zero-norm vector")]
    DegenerateVector,

    #[error("shape mismatch: expected length {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("training failed: {0}")]
    Training(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl DivaError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DivaError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        DivaError::Validation(msg.into())
    }

    /// Process exit code: 1 validation, 2 IO, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            DivaError::Io { .. } => 2,
            DivaError::Parse { .. }
            | DivaError::Validation(_)
            | DivaError::OutOfVocabulary(_)
            | DivaError::EmptyDocument(_)
            | DivaError::Shape { .. }
            | DivaError::Metric(_) => 1,
            DivaError::DegenerateVector | DivaError::Training(_) | DivaError::Internal(_) => 3,
        }
    }

    /// Short machine-readable tag used in structured CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            DivaError::Parse { .. } => "parse",
            DivaError::Validation(_) => "validation",
            DivaError::Io { .. } => "io",
            DivaError::OutOfVocabulary(_) => "out_of_vocabulary",
            DivaError::EmptyDocument(_) => "empty_document",
            DivaError::DegenerateVector => "degenerate_vector",
            DivaError::Shape { .. } => "shape",
            DivaError::Training(_) => "training",
            DivaError::Metric(_) => "metric",
            DivaError::Internal(_) => "internal",
        }
    }
}
