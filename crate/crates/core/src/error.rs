use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimensions(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("non-invertible transform")]
    NonInvertible,

    #[error("empty sequence: {0}")]
    EmptySequence(&'static str),

    #[error("empty person mask")]
    EmptyMask,

    #[error("sprite exceeds background")]
    SpriteExceedsBackground,

    #[error("warm-up incomplete")]
    WarmUpIncomplete,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("shape mismatch for tensor `{name}`: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("ground truth line {line}: {message}")]
    GroundTruth { line: usize, message: String },

    #[error("missing file for record `{record}`: {path}")]
    MissingRecordFile { record: String, path: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
