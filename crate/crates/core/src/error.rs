use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Failures while decoding one of the binary containers (EMB1 / PRB1).
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid dimension {0}")]
    BadDimension(u32),
    #[error("truncated payload: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("invalid utf-8 in string field")]
    InvalidUtf8,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("malformed field: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty split")]
    EmptySplit,
    #[error("unknown split tag for ids: {0:?}")]
    UnknownSplit(Vec<String>),
    #[error("duplicate document id {0:?}")]
    DuplicateDocument(String),
    #[error("empty text for document {0:?}")]
    EmptyText(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid label space: {0}")]
    LabelSpace(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("non-finite features")]
    NonFiniteFeatures,
    #[error("empty input")]
    EmptyInput,
    #[error("no documents for emotions: {0:?}")]
    MissingEmotions(Vec<String>),
    #[error("no embedding for {0:?}")]
    MissingEmbedding(String),
    #[error("pad value out of range for {emotion:?}: {value}")]
    PadRange { emotion: String, value: f64 },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, source: FormatError) -> Self {
        Error::Format {
            path: path.into(),
            source,
        }
    }
}
