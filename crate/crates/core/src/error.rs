//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Two rasters that must share a shape do not.
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),

    /// A distance field was requested for an empty seed set.
    #[error("distance field requested for an empty seed set")]
    NoSeeds,

    /// An operation that needs foreground pixels got an all-background mask.
    #[error("mask has no foreground pixels")]
    EmptyMask,

    /// A scene is missing the ground-truth annotations an operation needs.
    #[error("scene has no ground-truth instances")]
    MissingGroundTruth,

    /// A prediction had no ground-truth partner where one is required.
    #[error("instance {0} has no matched ground-truth instance")]
    NoMatchedGt(u32),

    /// A parameter or input failed validation.
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    /// An exchange-directory entry failed validation.
    #[error("patch {patch_id}: {why}")]
    BadPatch { patch_id: u32, why: String },

    /// Underlying filesystem failure, tagged with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file exists but its contents are not what the format requires.
    #[error("{path}: {why}")]
    Malformed { path: PathBuf, why: String },
}

impl Error {
    pub fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::Invalid { what, why: why.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn malformed(path: impl Into<PathBuf>, why: impl Into<String>) -> Self {
        Error::Malformed { path: path.into(), why: why.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
