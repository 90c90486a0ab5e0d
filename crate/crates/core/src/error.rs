//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid utf-8 in {path} at line {line}, byte offset {offset}")]
    Utf8 {
        path: PathBuf,
        line: usize,
        offset: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dictionary build produced no entries (min_freq {min_freq} exceeds every count)")]
    EmptyDictionary { min_freq: u64 },

    #[error("gram not present in counts: {0:?}")]
    UnseenGram(String),

    #[error("malformed dictionary file {path} at line {line}: {reason}")]
    DictFormat {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("integrity check failed for {path}: {reason}")]
    Integrity { path: PathBuf, reason: String },

    #[error("shape mismatch for {what}: expected {expected:?}, got {got:?}")]
    Shape {
        what: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("malformed checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("invalid tag {tag:?} in sentence {sentence}: {reason}")]
    InvalidTag {
        tag: String,
        sentence: usize,
        reason: String,
    },

    #[error("malformed labeled data in {path} at line {line}: {reason}")]
    DataFormat {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
