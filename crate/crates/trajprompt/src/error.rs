use std::path::PathBuf;

use trajprompt_core::corpus::AssembleError;
use trajprompt_core::embedding::EmbeddingError;
use trajprompt_core::eval::EvalError;
use trajprompt_core::ingest::IngestError;
use trajprompt_core::prompt::PromptError;
use trajprompt_core::retrieval::RetrievalError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("input schema: {0}")]
    Schema(String),

    #[error("{path}: unsupported format: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: corrupt file: {msg}")]
    Corrupt { path: PathBuf, msg: String },

    #[error("{path}:{line}: {msg}")]
    Line { path: PathBuf, line: usize, msg: String },

    #[error("transport error (request {request_id}): {msg}")]
    Transport { request_id: String, status: Option<u16>, msg: String },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("config: {0}")]
    Config(String),

    #[error("missing {path}; run `trajprompt {command}` first")]
    MissingArtifact { path: PathBuf, command: &'static str },

    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error(transparent)]
    Prompt(#[from] PromptError),

    #[error(transparent)]
    Embedding(#[from] EmbeddingError),

    #[error(transparent)]
    Retrieval(#[from] RetrievalError),

    #[error(transparent)]
    Assemble(#[from] AssembleError),

    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io { path: path.into(), source })
    }
}
