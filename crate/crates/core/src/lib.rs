//! Clinical terminology graph engine.
//!
//! The crate ingests a tab-separated terminology release into an immutable
//! [`terminology::ConceptGraph`], links free-text mentions to concepts by
//! ranking mean-of-synonym embeddings ([`linker`]), scores predictions with a
//! character-level concept-averaged IoU ([`metrics`]), serves BM25 retrieval
//! augmented with concept ids ([`retrieval`]) and renders the LLM prompts used
//! for translation bootstrapping, few-shot NER and guided summarization
//! ([`genai`]).
//!
//! Everything is synchronous except the HTTP [`service`], which runs on tokio
//! and pushes blocking work onto the blocking pool.

pub mod annotations;
pub mod cli;
pub mod embedding;
pub mod error;
pub mod genai;
pub mod jsonl;
pub mod linker;
pub mod metrics;
pub mod report;
pub mod retrieval;
pub mod service;
pub mod terminology;
pub mod text;

pub use error::{Error, Result};
pub use terminology::{Concept, ConceptGraph, ConceptId, Hierarchy};
