//! Error type shared by every pipeline stage.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at line {line}: {msg}")]
    MalformedRecord { line: usize, msg: String },

    #[error("duplicate article id `{id}`")]
    DuplicateId { id: String },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid split ratios: {msg}")]
    InvalidRatios { msg: String },

    #[error("sample pool cannot supply a donor: {msg}")]
    PoolExhausted { msg: String },

    #[error("article `{id}` has {got} paragraph(s); at least {min} required")]
    TooFewParagraphs { id: String, got: usize, min: usize },

    #[error("empty token sequence passed to the word encoder")]
    EmptyTokenSequence,

    #[error("empty input: {what}")]
    EmptyInput { what: &'static str },

    #[error("AUC is undefined: scores contain only one class")]
    SingleClass,

    #[error("embedding file line {line}: expected {expected} values, found {got}")]
    EmbeddingDimMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },

    #[error("embedding file line {line}: {msg}")]
    EmbeddingParse { line: usize, msg: String },

    #[error("training aborted at epoch {epoch}, batch {batch}: loss is not finite")]
    TrainingAborted { epoch: usize, batch: usize },

    #[error("checkpoint error: {msg}")]
    Checkpoint { msg: String },

    #[error("shape mismatch: {msg}")]
    ShapeMismatch { msg: String },

    #[error("invalid configuration: {msg}")]
    InvalidConfig { msg: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
