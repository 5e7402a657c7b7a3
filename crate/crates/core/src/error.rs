use thiserror::Error;

use crate::annotations::AnnotationError;
use crate::embedding::EmbeddingError;
use crate::genai::GenaiError;
use crate::jsonl::JsonlError;
use crate::linker::LinkError;
use crate::metrics::MetricsError;
use crate::retrieval::RetrievalError;
use crate::terminology::TerminologyError;

/// Crate-wide error, used by the CLI, the service and the C ABI. Library
/// modules return their own error types, which convert into this one.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Terminology(#[from] TerminologyError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Genai(#[from] GenaiError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A command line that parsed but cannot be acted on.
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit status: 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
