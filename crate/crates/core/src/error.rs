use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to decode image {name}: {reason}")]
    Decode { name: String, reason: String },

    #[error("failed to encode image: {0}")]
    Encode(String),

    #[error("invalid image buffer: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: {0}x{1}x{2} vs {3}x{4}x{5}")]
    DimensionMismatch(usize, usize, usize, usize, usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid transform spec: {0}")]
    InvalidSpec(String),

    #[error("invalid prediction data: {0}")]
    InvalidPredictions(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("predictor error: {0}")]
    Predictor(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
