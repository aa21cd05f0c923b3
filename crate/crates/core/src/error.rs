use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value {0} cannot be quantized")]
    NonFinite(f64),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("malformed image: expected {expected} pixels, got {actual}")]
    MalformedImage { expected: usize, actual: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("bit-flip probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("store was protected as {built:?} but read as {requested:?}")]
    ModeMismatch {
        built: crate::store::ProtectionMode,
        requested: crate::store::ProtectionMode,
    },

    #[error("fault mask does not fit the store: {0}")]
    WidthMismatch(String),

    #[error("invalid weights file: {0}")]
    WeightsFormat(String),

    #[error("weights file CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Crc { stored: u32, computed: u32 },

    #[error("topology check failed: {0}")]
    Topology(String),

    #[error("invalid dataset file: {0}")]
    DatasetFormat(String),

    #[error("invalid campaign configuration: {0}")]
    Config(String),

    #[error("no cells match between {baseline} and {candidate}")]
    NoMatchingCells { baseline: String, candidate: String },

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
