use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("invalid flow field: {0}")]
    InvalidFlow(String),

    #[error("incompatible pair: {a_width}x{a_height} vs {b_width}x{b_height}")]
    IncompatiblePair {
        a_width: usize,
        a_height: usize,
        b_width: usize,
        b_height: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate point configuration: {0}")]
    Degenerate(String),

    #[error("homography cannot be normalized: bottom-right entry {0:e} is near zero")]
    Normalization(f64),

    #[error("point ({x}, {y}) maps to infinity")]
    PointAtInfinity { x: f64, y: f64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("non-finite flow value at pixel ({x}, {y})")]
    NonFinite { x: usize, y: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("point ({x}, {y}) lies outside the {width}x{height} domain")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("batch item {index}: {source}")]
    BatchItem {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("bad flow file magic: {0:?}")]
    Format([u8; 4]),

    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },

    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("incompatible manifest: {0}")]
    Compatibility(String),

    #[error("malformed manifest: {0}")]
    Manifest(#[from] serde_json::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
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
