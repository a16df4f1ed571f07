use std::path::PathBuf;

use thiserror::Error;

/// Coarse grouping used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Divergence,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic in {0}")]
    BadMagic(PathBuf),
    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    Truncated { path: PathBuf, expected: u64, found: u64 },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("label out of range: entry {id} has label {label} but only {classes} classes")]
    LabelOutOfRange { id: String, label: usize, classes: usize },
    #[error("width mismatch: {id} declares width {expected} but file has {found}")]
    WidthMismatch { id: String, expected: usize, found: usize },
    #[error("missing file for entry {id}: {path}")]
    MissingFile { id: String, path: PathBuf },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid skeleton: {0}")]
    Skeleton(String),
    #[error("not a rotation matrix: {0}")]
    NotRotation(String),
    #[error("degenerate rotation encoding: {0}")]
    Degenerate(String),
    #[error("zero shoulder distance in every frame")]
    ZeroShoulderDistance,
    #[error("all keys masked for query row {row}")]
    AllMasked { row: usize },
    #[error("id {id} out of range for vocabulary of {size}")]
    IdOutOfRange { id: usize, size: usize },
    #[error("unknown parameter {0}")]
    MissingParam(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("vocabulary target {0} too small: need room for 4 specials and at least one piece")]
    VocabTooSmall(usize),
    #[error("split {0} is empty")]
    EmptySplit(String),
    #[error("empty manifest")]
    EmptyManifest,
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Diverged { .. } => ErrorCategory::Divergence,
            Error::Config(_) | Error::VocabTooSmall(_) => ErrorCategory::Usage,
            _ => ErrorCategory::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
