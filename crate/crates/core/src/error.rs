use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("video {video_id}: {message}")]
    Geometry { video_id: String, message: String },

    #[error("video {0} has no subtitle boxes")]
    EmptyDocument(String),

    #[error("annotation span [{start}, {end}] overlaps an earlier span")]
    OverlappingSpans { start: usize, end: usize },

    #[error("annotation span [{start}, {end}] is outside a sequence of length {len}")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },

    #[error("article {article_id} has {headings} headings, at least 3 are required")]
    TooFewHeadings { article_id: String, headings: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("tag index {tag} out of range for {labels} labels")]
    TagOutOfRange { tag: usize, labels: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("sequence length {len} exceeds encoder max positions {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("non-finite loss")]
    NonFiniteLoss,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("model variant: {0}")]
    Variant(String),

    #[error("empty training set: {0}")]
    EmptyTrainingSet(String),
}

impl Error {
    /// Stable short category used by the command line error line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Geometry { .. } => "geometry",
            Error::EmptyDocument(_) => "empty-document",
            Error::OverlappingSpans { .. } | Error::SpanOutOfBounds { .. } => "annotation",
            Error::TooFewHeadings { .. } => "article",
            Error::Config(_) => "config",
            Error::Shape(_) | Error::LengthMismatch { .. } => "shape",
            Error::TagOutOfRange { .. } => "tag",
            Error::SequenceTooLong { .. } => "sequence-length",
            Error::NonFiniteLoss => "non-finite-loss",
            Error::Checkpoint(_) => "checkpoint",
            Error::Variant(_) => "variant",
            Error::EmptyTrainingSet(_) => "empty-training-set",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
