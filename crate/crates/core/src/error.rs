use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: invalid UTF-8")]
    Utf8 { line: usize },

    #[error("line {line}: duplicate key {key}")]
    DuplicateKey { line: usize, key: String },

    #[error("query {query_id} has more than {limit} candidates")]
    Capacity { query_id: String, limit: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("missing reference: {0}")]
    MissingReference(String),

    #[error("text of {id} contains a line break and cannot be exported")]
    Sanitation { id: String },

    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },

    #[error("scoring failed for query {query_id}, passage {passage_id}: {message}")]
    Scoring {
        query_id: String,
        passage_id: String,
        message: String,
    },

    #[error("no topics with relevance judgments to average over")]
    NoTopics,

    #[error("missing committee statistics for: {}", .0.join(", "))]
    MissingStats(Vec<String>),

    #[error("unsupported index file: {0}")]
    IndexFormat(String),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
