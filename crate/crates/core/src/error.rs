use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format (expected PNG or binary PPM)")]
    UnsupportedFormat,
    #[error("image decode failed: {0}")]
    Decode(String),
    #[error("image has zero width or height")]
    EmptyImage,
    #[error("image encode failed: {0}")]
    Encode(String),
    #[error("requested {requested} colors but the image has only {available} distinct colors")]
    TooManyColors { requested: usize, available: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("every layer was classified as noise (noise area threshold {0} is too large)")]
    AllNoise(usize),
    #[error("empty mask")]
    EmptyMask,
    #[error("degenerate bounding triangle: angle sum must lie strictly between 0 and π")]
    DegenerateTriangle,
    #[error("depth graph still contains a cycle through layer {0}")]
    CycleDetected(usize),
    #[error("superlevel set is empty")]
    EmptySuperlevel,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
