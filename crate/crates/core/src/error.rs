use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no AP in window")]
    NoAccessPoint,

    #[error("quadrature for {integral} did not converge: estimate {estimate:e}, residual error {error:e}")]
    QuadratureNonConvergence {
        integral: String,
        estimate: f64,
        error: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("wrong magic in {path}: expected {expected}, found {found}")]
    WrongMagic { path: PathBuf, expected: u32, found: u32 },

    #[error("truncated IDX file {path}: needed {needed} bytes, found {found}")]
    Truncated { path: PathBuf, needed: usize, found: usize },

    #[error("item count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check(cond: bool, name: &'static str, value: f64, reason: &'static str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value, reason })
    }
}
