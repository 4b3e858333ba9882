use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame at t={timestamp}s has no points")]
    EmptyFrame { timestamp: f64 },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("batch normalization needs at least 2 rows in train mode, got {0}")]
    BatchTooSmall(usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("stream error: frame at t={got}s does not follow t={previous}s")]
    OutOfOrder { previous: f64, got: f64 },

    #[error("internal numeric error: {0}")]
    Numeric(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("recording {recording}: timestamps are not increasing at frame {frame_index}")]
    NonMonotone { recording: String, frame_index: u64 },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
