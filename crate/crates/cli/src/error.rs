use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] hoidet::Error),

    #[error(transparent)]
    Annotate(#[from] hoidet_annotate::AnnotateError),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit status and the tag printed with the message.
    pub fn kind(&self) -> (i32, &'static str) {
        match self {
            CliError::Usage(_) => (2, "usage"),
            CliError::Core(hoidet::Error::Config(_)) => (2, "usage"),
            CliError::Validation(_) => (3, "validation"),
            CliError::Core(e) if e.is_validation() => (3, "validation"),
            CliError::Core(
                hoidet::Error::MissingImage(_)
                | hoidet::Error::Checkpoint(_)
                | hoidet::Error::Precondition(_)
                | hoidet::Error::EmptyClass(_),
            ) => (3, "validation"),
            CliError::Annotate(hoidet_annotate::AnnotateError::Core(e)) if e.is_validation() => {
                (3, "validation")
            }
            CliError::Annotate(hoidet_annotate::AnnotateError::Log { .. }) => (3, "validation"),
            _ => (1, "runtime"),
        }
    }
}
