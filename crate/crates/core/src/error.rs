use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("distance {0} m lies outside every protocol band")]
    OutOfProtocolDistance(f64),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("event {0} has no bluetooth readings")]
    EmptyEvent(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid training data: {0}")]
    InvalidData(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("undefined rate for {subset} at D={threshold}: {reason}")]
    UndefinedRate {
        subset: String,
        threshold: f64,
        reason: String,
    },

    #[error("scoring error: {0}")]
    Scoring(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("artifact fingerprint mismatch: model was trained with {trained}, current config is {current}")]
    Fingerprint { trained: String, current: String },

    #[error("{}: {reason}", path.display())]
    Io {
        path: PathBuf,
        reason: std::io::Error,
    },
}

impl Error {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            reason: source,
        }
    }
}
