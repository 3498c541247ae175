use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid animation: {0}")]
    InvalidAnimation(String),
    #[error("weight {value} at frame {frame}, channel {channel} is outside [0, 1]")]
    OutOfRange {
        frame: usize,
        channel: usize,
        value: f64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unknown phoneme {0:?}")]
    UnknownPhoneme(String),
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model was trained for '{model}' constraints but the request carries '{request}' guidance; use a model trained with --constraint {request}")]
    KindMismatch {
        model: crate::constraints::ConstraintKind,
        request: crate::constraints::ConstraintKind,
    },
    #[error("interpolation baseline needs a boundary frame: {0}")]
    NoBoundary(String),
    #[error("sequence of length {len} is too short for the discriminator (needs {min})")]
    SequenceTooShort { len: usize, min: usize },
    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFinite { iteration: u64, detail: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
