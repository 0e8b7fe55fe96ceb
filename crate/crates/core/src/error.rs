use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{0}: bag has no instances")]
    EmptyBag(&'static str),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("loss must be a 1x1 tensor, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("scoring mode {mode} is not available for {variant}")]
    UnsupportedScoring { variant: String, mode: String },

    #[error("labels contain a single class ({n_pos} positive, {n_neg} negative)")]
    DegenerateLabels { n_pos: usize, n_neg: usize },

    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("length mismatch: {what} has {left} entries, expected {right}")]
    Length {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("format error in {path:?} at byte offset {offset}: {msg}")]
    Format {
        path: Option<PathBuf>,
        offset: usize,
        msg: String,
    },

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("non-finite loss at epoch {epoch}, bag {bag}")]
    NonFiniteLoss { epoch: usize, bag: String },

    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
