use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("lambda_max must be positive, got {0}")]
    NonPositiveLambda(f64),

    #[error("stopword file missing or unreadable: {path}: {source}")]
    StopwordFileMissing {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },

    #[error("request to {url} timed out after {seconds}s")]
    Timeout { url: String, seconds: f64 },

    #[error("http status {status} from {url}")]
    HttpStatus { status: u16, url: String },

    #[error("http transport error for {url}: {message}")]
    HttpTransport { url: String, message: String },

    #[error("malformed dictionary line {0}")]
    MalformedLine(usize),

    #[error("vector for {token:?} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        token: String,
        got: usize,
        expected: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("requested {requested} negative pairs but only {available} non-edges exist")]
    NotEnoughNonEdges { requested: usize, available: usize },

    #[error("non-finite loss {value} at stage {stage} epoch {epoch}")]
    NonFiniteLoss {
        stage: u8,
        epoch: usize,
        value: f64,
    },

    #[error("graph has no edges")]
    EmptyEdgeSet,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
        Error::SchemaViolation {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
