//! Two-stage entity linking: find mention spans, then rank concepts for each
//! span by cosine similarity against per-concept mean-of-synonym embeddings.
//! A static mention→concept dictionary learned from training annotations can
//! short-circuit the ranking.

mod detector;
mod dictionary;
mod index;
mod pipeline;

use thiserror::Error;

pub use detector::{detect_mentions_dictionary, DetectedSpan, MentionDetector};
pub use dictionary::{
    build_static_dictionary, ingest_corrections, Correction, CorrectionLog, DictionaryRow,
    IngestOutcome, StaticDictionary,
};
pub use index::{build_concept_index, Candidate, ConceptIndex, IndexEntry};
pub use pipeline::{
    link_spans, LinkSource, LinkedEntity, Linker, PipelineSettings, SpanInput, SpanSource,
};

use crate::embedding::EmbeddingError;
use crate::terminology::TerminologyError;

#[derive(Debug, Error)]
pub enum LinkError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Terminology(#[from] TerminologyError),
    #[error("embedder fingerprint `{embedder}` does not match concept index `{index}`")]
    Fingerprint { index: String, embedder: String },
    #[error("concept index: {0}")]
    Index(String),
    #[error("span ({start}, {end}) outside text of length {len}")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Format {
        path: String,
        line: usize,
        reason: String,
    },
}
