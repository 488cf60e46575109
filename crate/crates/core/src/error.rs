use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // ── parsing and linearization ──
    #[error("utterance is empty or whitespace-only")]
    EmptyUtterance,
    #[error("malformed annotation: {0}")]
    MalformedAnnotation(String),
    #[error("pointer @ptr_{index} out of range for utterance of length {len}")]
    PointerRange { index: usize, len: usize },
    #[error("malformed target at position {position}: {reason}")]
    MalformedTarget { position: usize, reason: String },
    #[error("unrecognized tag token format: {0:?}")]
    UnknownTagFormat(String),

    // ── data ──
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("domain {0:?} not found in corpus")]
    DomainNotFound(String),
    #[error("mention span {start}..{end} does not align with token boundaries")]
    SpanAlignment { start: usize, end: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),

    // ── tensors ──
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("checkpoint is incompatible: {0}")]
    Incompatible(String),

    // ── model ──
    #[error("length {len} exceeds limit {limit}")]
    LengthExceeded { len: usize, limit: usize },
    #[error("concept description is empty or the bank has no concepts")]
    EmptyDescription,
    #[error("concept {0:?} is not in the bank")]
    UnknownConcept(String),

    // ── training and evaluation ──
    #[error("gold index {index} outside support of size {support}")]
    Support { index: usize, support: usize },
    #[error("few-shot subset is empty")]
    EmptyFewShot,
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("zero-shot protocol needs at least two domains, found {0}")]
    NeedTwoDomains(usize),
    #[error("mixed metric kinds in one table: {0}")]
    MetricMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
