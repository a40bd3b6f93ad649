use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("not an NPY file: bad magic bytes")]
    BadMagic,
    #[error("unsupported NPY header: {0}")]
    BadHeader(String),
    #[error("unsupported dtype `{0}`")]
    UnsupportedDtype(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },
    #[error("label {label} has no class assigned")]
    MissingClass { label: u32 },
    #[error("class {class} is outside the known class set")]
    UnknownClass { class: u32 },
    #[error("class {class} has no mapping into the common scheme")]
    UnmappedClass { class: u32 },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u32, classes: usize },
    #[error("marker at pixel ({row}, {col}) lies outside the mask")]
    MarkerOutsideMask { row: usize, col: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("all class counts are zero")]
    AllZeroCounts,
    #[error("value {value} at flat index {index} is not an exact non-negative integer")]
    NotAnInteger { index: usize, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("PNG encoding failed: {0}")]
    Png(String),
    #[error("JSON serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(left: impl std::fmt::Debug, right: impl std::fmt::Debug) -> Self {
        Error::ShapeMismatch {
            left: format!("{left:?}"),
            right: format!("{right:?}"),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
