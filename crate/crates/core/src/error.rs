use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("kernel of size {kernel} does not fit the padded {width}x{height} image")]
    KernelTooLarge { kernel: usize, width: usize, height: usize },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("parameter domain error: {0}")]
    Domain(String),

    #[error("image is {width}x{height}, smaller than the {window}x{window} window")]
    ImageTooSmall { width: usize, height: usize, window: usize },

    #[error("{}: {source}", path.display())]
    Asset {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("missing asset {}", .0.display())]
    MissingAsset(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_path(self, path: impl Into<PathBuf>) -> Self {
        Error::Asset {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable tag, used for error JSON emitted by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::KernelTooLarge { .. } => "kernel_too_large",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Domain(_) => "domain",
            Error::ImageTooSmall { .. } => "image_too_small",
            Error::Asset { source, .. } => source.kind(),
            Error::MissingAsset(_) => "missing_asset",
            Error::Io(_) => "io",
            Error::Codec(_) => "codec",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
