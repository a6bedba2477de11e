use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("user {user} already holds item {item}")]
    DuplicateItem { user: usize, item: usize },

    #[error("user {user} does not hold item {item}")]
    AbsentItem { user: usize, item: usize },

    #[error("self-similarity of item {0} is never defined")]
    SelfSimilarity(usize),

    #[error("item {item} is already collected by user {user} and cannot be scored")]
    AlreadyCollected { user: usize, item: usize },

    #[error("user {0} holds every item; nothing left to recommend")]
    NoCandidates(usize),

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: no valid rating rows")]
    NoValidRows { path: PathBuf },

    #[error("{0}")]
    Csv(String),

    #[error("unknown figure kind `{0}`")]
    UnknownFigure(String),

    #[error("plot rendering failed: {0}")]
    Plot(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    StdIo(#[from] std::io::Error),
}

impl Error {
    /// True for errors that come from a bad configuration rather than a failing run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_) | Error::UnknownFigure(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
