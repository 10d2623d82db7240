use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("duplicate document id `{doc_id}` ({first} and {second})")]
    DuplicateDocument {
        doc_id: String,
        first: PathBuf,
        second: PathBuf,
    },

    #[error("converter failed at turn {turn}: {message}")]
    Conversion {
        turn: usize,
        /// Markdown assembled from turns `1..turn`, usable to resume.
        partial_output: String,
        message: String,
    },

    #[error("embedding dimension mismatch: index has {index}, embedder produces {embedder}")]
    DimensionMismatch { index: usize, embedder: usize },

    #[error("unknown segment key `{0}`")]
    UnknownKey(String),

    #[error("index components disagree on the segment key set; missing: {}", .missing.join(", "))]
    InconsistentIndex { missing: Vec<String> },

    #[error("index format error: {0}")]
    IndexFormat(String),

    #[error("query `{query_id}`: {source}")]
    Query {
        query_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("relevant segments missing from the corpus for queries: {}", .query_ids.join(", "))]
    UnknownRelevantKeys { query_ids: Vec<String> },

    #[error("vector is not unit length (norm {norm})")]
    NotUnitVector { norm: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("plugin `{command}` failed: {message}")]
    Plugin { command: String, message: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

/// A non-fatal condition recorded while processing a document.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Warning {
    /// Where the condition was observed, e.g. `doc_id` or `doc_id#segment_id`.
    pub context: String,
    pub message: String,
}

impl Warning {
    pub fn new(context: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            context: context.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.context, self.message)
    }
}
