use std::path::PathBuf;

use thiserror::Error;

use crate::raster::RasterKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("raster holds {actual} values but {height}x{width} requires {}", height * width)]
    LengthMismatch {
        height: usize,
        width: usize,
        actual: usize,
    },
    #[error("value {value} at index {index} violates {kind:?} raster invariant")]
    InvalidPixel {
        kind: RasterKind,
        index: usize,
        value: f64,
    },
    #[error("operation requires a {expected:?} raster, got {actual:?}")]
    WrongKind {
        expected: RasterKind,
        actual: RasterKind,
    },
    #[error("mask is not binary: value {value} at index {index}")]
    NonBinary { index: usize, value: f64 },
    #[error("degenerate polygon at index {index}: {reason}")]
    DegeneratePolygon { index: usize, reason: &'static str },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("instance map has no scores")]
    Unscored,
    #[error("detection {index} references unknown asset {asset_id:?}")]
    UnknownAsset { index: usize, asset_id: String },
    #[error("detection {index} belongs to image {image:?} which has no group key")]
    UnknownGroupKey { index: usize, image: String },
    #[error("could not place {count} buildings after {attempts} attempts")]
    InfeasiblePacking { count: usize, attempts: usize },

    #[error("{path}: bad magic")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported element type {descr:?}")]
    UnsupportedElementType { path: PathBuf, descr: String },
    #[error("{path}: truncated payload, expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: malformed header: {reason}")]
    BadHeader { path: PathBuf, reason: String },
    #[error("{path}: feature {index}: {reason}")]
    Feature {
        path: PathBuf,
        index: usize,
        reason: String,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
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

    /// True for failures caused by the filesystem rather than by content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
