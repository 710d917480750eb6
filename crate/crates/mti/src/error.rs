//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by the data pipeline, the networks and the experiment
/// harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing modality file for subject {subject}: {path}")]
    MissingModality { subject: String, path: PathBuf },

    #[error("dimension mismatch for subject {subject}: {detail}")]
    DimensionMismatch { subject: String, detail: String },

    #[error("unknown label id {id} (expected one of the mapped raw ids)")]
    UnknownLabel { id: u32 },

    #[error("degenerate intensity range in modality {modality}: min == max == {value}")]
    DegenerateRange { modality: String, value: f64 },

    #[error("shape mismatch: {expected} vs {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("bias field id {id} out of range 1..={max}")]
    FieldIdOutOfRange { id: u32, max: u32 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed raster file {path}: {detail}")]
    MalformedRaster { path: PathBuf, detail: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {value}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },

    #[error("empty sample set: {0}")]
    EmptySampleSet(String),

    #[error("duplicate subject id: {0}")]
    DuplicateSubject(String),

    #[error("zero variance in paired differences: samples are identical")]
    IdenticalSamples,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("session failed: {0}")]
    Session(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
