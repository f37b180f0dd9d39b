use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("backend returned an empty response")]
    EmptyResponse,

    #[error("unknown checkpoint {0:?}")]
    UnknownCheckpoint(String),

    #[error("checkpoint registry: {0}")]
    Registry(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("insufficient data: need more than {needed} rows, got {actual}")]
    InsufficientData { needed: usize, actual: usize },

    #[error("non-finite value in input matrix at row {row}")]
    NonFinite { row: usize },

    #[error("topic {topic_id}: {reason}")]
    Topic { topic_id: i64, reason: String },

    #[error("empty label after sanitization")]
    EmptyLabel,

    #[error("prompt template: {0}")]
    Template(String),

    #[error("unparseable classification response {0:?}")]
    Classification(String),

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("label/topic misalignment: {labels} labels for {topics} topics")]
    Misaligned { labels: usize, topics: usize },

    #[error("corpus mismatch: {0}")]
    CorpusMismatch(String),

    #[error("run store: {0}")]
    Store(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("document {id}: {source}")]
    Document {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
