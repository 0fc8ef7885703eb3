use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the synthesis, feature, model, and evaluation stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty audio")]
    EmptyAudio,

    #[error("no signal above threshold")]
    NoSignal,

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),

    #[error("event exceeds scene bounds")]
    OutOfBounds,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown scene class `{0}`")]
    UnknownScene(String),

    #[error("unknown event class `{0}`")]
    UnknownEvent(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("stale upstream stage: {0}")]
    Stale(String),

    #[error("invalid file format: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
