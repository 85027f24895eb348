use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AnnotateError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("unknown image `{0}`")]
    UnknownImage(String),

    /// The caller's claim is gone: never granted, or expired and re-claimed.
    #[error("stale claim on task `{task_id}`: {message}")]
    Conflict { task_id: String, message: String },

    #[error("submission rejected ({rule}): {message}")]
    Rejected { rule: &'static str, message: String },

    #[error("bad request: {0}")]
    BadRequest(String),

    #[error("write-ahead log {path}:{line}: {message}")]
    Log {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] hoidet::Error),
}

impl AnnotateError {
    pub(crate) fn reject(rule: &'static str, message: impl Into<String>) -> Self {
        AnnotateError::Rejected {
            rule,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AnnotateError::Io {
            path: path.into(),
            source,
        }
    }
}
