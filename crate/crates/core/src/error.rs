use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: bad field `{field}`: {message}")]
    Parse {
        file: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("invalid annotation for image `{image_id}`: {message}")]
    Validation { image_id: String, message: String },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid taxonomy: {0}")]
    Taxonomy(String),

    #[error("no instances of class {0}")]
    EmptyClass(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("non-finite loss at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("missing image raster for `{0}`")]
    MissingImage(String),

    #[error("scores reference unknown image `{0}`")]
    UnknownImage(String),

    #[error("synthesis rule for class {hoi_id} cannot be placed: {message}")]
    Placement { hoi_id: usize, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn parse(
        file: impl Into<String>,
        line: usize,
        field: impl Into<String>,
        message: impl ToString,
    ) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn validation(image_id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            image_id: image_id.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed or inconsistent input data.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation { .. }
                | Error::InvalidBox(_)
                | Error::Taxonomy(_)
                | Error::UnknownImage(_)
        )
    }
}
