use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("caption is empty after cleaning")]
    EmptyCaption,

    #[error("sentence is empty")]
    EmptySentence,

    #[error("no cross-sentence word pair with distinct surface forms")]
    NoSwapPossible,

    #[error("images have different orientation classes")]
    OrientationMismatch,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("dataset needs at least 2 items, found {0}")]
    DatasetTooSmall(usize),

    #[error("shape mismatch in {what}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("row {row} of {what} is not unit norm (|x| = {norm})")]
    NotNormalized {
        what: &'static str,
        row: usize,
        norm: f64,
    },

    #[error("step {step} outside schedule of {total} steps")]
    StepOutOfRange { step: u64, total: u64 },

    #[error("k = {k} outside [1, {max}]")]
    KOutOfRange { k: usize, max: usize },

    #[error("evaluation suite is empty")]
    EmptySuite,

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid lexicon line {line}: {reason}")]
    Lexicon { line: usize, reason: String },

    #[error("corpus line {line}: {reason}")]
    Corpus { line: usize, reason: String },

    #[error("bad image data: {0}")]
    Image(String),

    #[error("config hash {found} does not match checkpoint hash {expected}")]
    HashMismatch { expected: String, found: String },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
