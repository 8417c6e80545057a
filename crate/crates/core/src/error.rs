use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("training diverged at iteration {iteration}, epoch {epoch}, batch {batch}: {reason}")]
    Training {
        iteration: usize,
        epoch: usize,
        batch: usize,
        reason: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("tiff error: {0}")]
    Tiff(#[from] tiff::TiffError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for failures caused by reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Image(_) | Error::Tiff(_) | Error::Format(_)
        )
    }

    /// True for non-finite values or failed numerical procedures.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Training { .. })
    }
}
