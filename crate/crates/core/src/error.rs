use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate histogram: {0}")]
    DegenerateHistogram(String),

    #[error("k-means needs at least {k} distinct intensities, found {distinct}")]
    DegenerateKmeans { k: usize, distinct: usize },

    #[error("degenerate image: {0}")]
    DegenerateImage(String),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("mask is empty")]
    EmptyMask,

    #[error("empty batch")]
    EmptyBatch,

    #[error("insufficient rows: {0}")]
    InsufficientRows(String),

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("duplicate entry: {0}")]
    Duplicate(String),

    #[error("step `{step}` failed: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: schema validation failed: {message}")]
    Schema { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Machine-readable error code, stable across releases.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "INVALID_PARAMETER",
            Error::DegenerateHistogram(_) => "DEGENERATE_HISTOGRAM",
            Error::DegenerateKmeans { .. } => "DEGENERATE_KMEANS",
            Error::DegenerateImage(_) => "DEGENERATE_IMAGE",
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::EmptyMask => "EMPTY_MASK",
            Error::EmptyBatch => "EMPTY_BATCH",
            Error::InsufficientRows(_) => "INSUFFICIENT_ROWS",
            Error::UnknownKey(_) => "UNKNOWN_KEY",
            Error::Duplicate(_) => "DUPLICATE",
            Error::Step { source, .. } => source.code(),
            Error::Io { .. } => "IO",
            Error::Format { .. } => "FORMAT",
            Error::Schema { .. } => "SCHEMA",
        }
    }

    /// Name of the pipeline step that failed, if any.
    pub fn step(&self) -> Option<&'static str> {
        match self {
            Error::Step { step, .. } => Some(step),
            _ => None,
        }
    }
}

pub(crate) trait StepContext<T> {
    fn in_step(self, step: &'static str) -> Result<T>;
}

impl<T> StepContext<T> for Result<T> {
    fn in_step(self, step: &'static str) -> Result<T> {
        self.map_err(|e| Error::Step {
            step,
            source: Box::new(e),
        })
    }
}
