//! Concept-augmented document retrieval: a BM25 inverted index over text
//! fields plus concept-id postings, three ranking modes and the evaluation
//! harness that compares them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::default_tokenize;
use crate::embedding::{cosine, Embedder, EmbeddingError, EmbeddingVector};
use crate::jsonl::{self, JsonlError};
use crate::linker::{LinkError, Linker, PipelineSettings, SpanSource};
use crate::metrics::{prf_at_k, MetricsError, PrfReport, RetrievalJudgments};
use crate::report::{Cell, ReportTable};
use crate::terminology::ConceptId;
use crate::text::{char_slice, fold};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;
pub const DEFAULT_CONCEPT_WEIGHT: f64 = 10.0;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate note_id `{0}` in corpus")]
    DuplicateNote(String),
    #[error("document `{0}` is not indexed")]
    UnknownDocument(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("document `{0}` has no concept_ids; tag the corpus first")]
    Untagged(String),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
}

/// A corpus record as read from JSONL. Absent `concept_ids` means the
/// document still has to be tagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDocument {
    pub note_id: String,
    pub fields: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept_ids: Option<Vec<ConceptId>>,
}

impl RawDocument {
    /// All fields joined by newlines, in field-name order.
    pub fn full_text(&self) -> String {
        join_fields(&self.fields)
    }
}

fn join_fields(fields: &BTreeMap<String, String>) -> String {
    fields.values().map(String::as_str).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedDocument {
    pub note_id: String,
    pub fields: BTreeMap<String, String>,
    pub concept_ids: BTreeSet<ConceptId>,
}

impl IndexedDocument {
    pub fn full_text(&self) -> String {
        join_fields(&self.fields)
    }
}

impl TryFrom<RawDocument> for IndexedDocument {
    type Error = RetrievalError;

    fn try_from(raw: RawDocument) -> Result<Self, Self::Error> {
        let ids = raw
            .concept_ids
            .ok_or_else(|| RetrievalError::Untagged(raw.note_id.clone()))?;
        Ok(IndexedDocument {
            note_id: raw.note_id,
            fields: raw.fields,
            concept_ids: ids.into_iter().collect(),
        })
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<RawDocument>, RetrievalError> {
    Ok(jsonl::read(path)?)
}

/// Index terms: default tokens with Latin case folding.
pub fn tokenize_terms(text: &str) -> Vec<String> {
    default_tokenize(text)
        .spans()
        .iter()
        .map(|t| fold(char_slice(text, t.start, t.end)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

impl Bm25Params {
    fn validate(&self) -> Result<(), RetrievalError> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(RetrievalError::InvalidParams(format!("k1 = {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(RetrievalError::InvalidParams(format!("b = {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub field: u32,
    pub tf: u32,
}

/// Immutable inverted index. Documents are numbered in ascending note_id
/// order, so every posting list is sorted by note_id as well.
#[derive(Debug, Clone)]
pub struct SearchIndex {
    params: Bm25Params,
    docs: Vec<IndexedDocument>,
    field_names: Vec<String>,
    terms: BTreeMap<String, Vec<Posting>>,
    concepts: BTreeMap<ConceptId, Vec<u32>>,
    field_lengths: Vec<BTreeMap<u32, u32>>,
    doc_lengths: Vec<u32>,
    avg_len: f64,
}

pub fn index_documents(
    docs: Vec<IndexedDocument>,
    params: Bm25Params,
) -> Result<SearchIndex, RetrievalError> {
    params.validate()?;
    let mut docs = docs;
    docs.sort_by(|a, b| a.note_id.cmp(&b.note_id));
    if let Some(w) = docs.windows(2).find(|w| w[0].note_id == w[1].note_id) {
        return Err(RetrievalError::DuplicateNote(w[0].note_id.clone()));
    }
    let field_names: Vec<String> = docs
        .iter()
        .flat_map(|d| d.fields.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut terms: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut concepts: BTreeMap<ConceptId, Vec<u32>> = BTreeMap::new();
    let mut field_lengths = Vec::with_capacity(docs.len());
    let mut doc_lengths = Vec::with_capacity(docs.len());
    for (d, doc) in docs.iter().enumerate() {
        let d = d as u32;
        let mut lens = BTreeMap::new();
        for (name, text) in &doc.fields {
            let f = field_names.binary_search(name).expect("collected above") as u32;
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            let tokens = tokenize_terms(text);
            lens.insert(f, tokens.len() as u32);
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, tf) in tf {
                terms.entry(term).or_default().push(Posting { doc: d, field: f, tf });
            }
        }
        doc_lengths.push(lens.values().sum());
        field_lengths.push(lens);
        for c in &doc.concept_ids {
            concepts.entry(c.clone()).or_default().push(d);
        }
    }
    let avg_len = if docs.is_empty() {
        0.0
    } else {
        doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / docs.len() as f64
    };
    Ok(SearchIndex {
        params,
        docs,
        field_names,
        terms,
        concepts,
        field_lengths,
        doc_lengths,
        avg_len,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexHeader {
    k1: f64,
    b: f64,
    documents: usize,
}

impl SearchIndex {
    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[IndexedDocument] {
        &self.docs
    }

    pub fn field_names(&self) -> &[String] {
        &self.field_names
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.terms.get(term).map_or(&[], Vec::as_slice)
    }

    /// Documents carrying `concept_id`, ascending.
    pub fn concept_postings(&self, concept_id: &str) -> Vec<&str> {
        self.concepts
            .get(concept_id)
            .map(|ds| ds.iter().map(|&d| self.docs[d as usize].note_id.as_str()).collect())
            .unwrap_or_default()
    }

    fn position(&self, note_id: &str) -> Option<usize> {
        self.docs
            .binary_search_by(|d| d.note_id.as_str().cmp(note_id))
            .ok()
    }

    pub fn document(&self, note_id: &str) -> Option<&IndexedDocument> {
        self.position(note_id).map(|i| &self.docs[i])
    }

    /// Token count of one field of a document.
    pub fn field_length(&self, note_id: &str, field: &str) -> Option<u32> {
        let d = self.position(note_id)?;
        let f = self.field_names.binary_search_by(|n| n.as_str().cmp(field)).ok()?;
        self.field_lengths[d].get(&(f as u32)).copied()
    }

    /// The field holding the most query-term occurrences (ties to the
    /// smaller field name), or the first field when none match.
    pub fn best_field(&self, note_id: &str, query_terms: &[String]) -> Option<(&str, &str)> {
        let doc = self.document(note_id)?;
        let query: BTreeSet<&str> = query_terms.iter().map(String::as_str).collect();
        let mut best: Option<(&String, &String, usize)> = None;
        for (name, text) in &doc.fields {
            let hits = tokenize_terms(text)
                .iter()
                .filter(|t| query.contains(t.as_str()))
                .count();
            if best.is_none_or(|b| hits > b.2) {
                best = Some((name, text, hits));
            }
        }
        best.map(|(n, t, _)| (n.as_str(), t.as_str()))
    }

    pub fn doc_length(&self, note_id: &str) -> Option<u32> {
        self.position(note_id).map(|d| self.doc_lengths[d])
    }

    /// Document frequency and total in-document tf for one document.
    fn term_stats(&self, term: &str) -> (usize, BTreeMap<u32, u32>) {
        let mut per_doc: BTreeMap<u32, u32> = BTreeMap::new();
        for p in self.postings(term) {
            *per_doc.entry(p.doc).or_default() += p.tf;
        }
        (per_doc.len(), per_doc)
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.docs.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, len: u32) -> f64 {
        let tf = tf as f64;
        let Bm25Params { k1, b } = self.params;
        let norm = if self.avg_len > 0.0 {
            1.0 - b + b * len as f64 / self.avg_len
        } else {
            1.0
        };
        idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// BM25 of every document with at least one query term.
    fn bm25_all(&self, query_terms: &[String]) -> BTreeMap<u32, f64> {
        let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
        for term in query_terms {
            let (df, per_doc) = self.term_stats(term);
            if df == 0 {
                continue;
            }
            let idf = self.idf(df);
            for (d, tf) in per_doc {
                *scores.entry(d).or_default() += self.term_weight(idf, tf, self.doc_lengths[d as usize]);
            }
        }
        scores
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let header = serde_json::to_value(IndexHeader {
            k1: self.params.k1,
            b: self.params.b,
            documents: self.docs.len(),
        })
        .expect("header serializes");
        let rows = std::iter::once(header).chain(
            self.docs
                .iter()
                .map(|d| serde_json::to_value(d).expect("document serializes")),
        );
        Ok(jsonl::write(path, rows)?)
    }

    /// Loads a written index; postings and statistics are rebuilt from the
    /// stored documents.
    pub fn read(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let path = path.as_ref();
        let rows: Vec<serde_json::Value> = jsonl::read(path)?;
        let format = |reason: String| RetrievalError::Format {
            path: path.display().to_string(),
            reason,
        };
        let mut rows = rows.into_iter();
        let header: IndexHeader = rows
            .next()
            .ok_or_else(|| format("empty index file".into()))
            .and_then(|h| serde_json::from_value(h).map_err(|e| format(format!("header: {e}"))))?;
        let docs = rows
            .map(|r| serde_json::from_value::<IndexedDocument>(r).map_err(|e| format(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if docs.len() != header.documents {
            return Err(format(format!(
                "header announces {} documents, found {}",
                header.documents,
                docs.len()
            )));
        }
        index_documents(docs, Bm25Params { k1: header.k1, b: header.b })
    }
}

/// BM25 with all fields scored as one bag. Query terms are used as given,
/// so a repeated term counts once per repetition.
pub fn bm25_score(
    index: &SearchIndex,
    query_terms: &[String],
    note_id: &str,
) -> Result<f64, RetrievalError> {
    let d = index
        .position(note_id)
        .ok_or_else(|| RetrievalError::UnknownDocument(note_id.to_string()))? as u32;
    let mut score = 0.0;
    for term in query_terms {
        let (df, per_doc) = index.term_stats(term);
        if let Some(&tf) = per_doc.get(&d) {
            score += index.term_weight(index.idf(df), tf, index.doc_lengths[d as usize]);
        }
    }
    Ok(score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMention {
    pub start: usize,
    pub end: usize,
    pub concept_id: ConceptId,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedQuery {
    pub text: String,
    pub terms: Vec<String>,
    pub concept_ids: BTreeSet<ConceptId>,
    #[serde(default)]
    pub mentions: Vec<QueryMention>,
}

impl AnnotatedQuery {
    /// A query without concept annotation.
    pub fn plain(text: &str) -> Self {
        AnnotatedQuery {
            text: text.to_string(),
            terms: tokenize_terms(text),
            ..Default::default()
        }
    }

    pub fn with_concepts(text: &str, ids: impl IntoIterator<Item = ConceptId>) -> Self {
        AnnotatedQuery {
            concept_ids: ids.into_iter().collect(),
            ..Self::plain(text)
        }
    }

    /// The query text with `[concept_id]` after each linked mention.
    pub fn inline(&self) -> String {
        let mut out = String::new();
        let mut pos = 0;
        for (i, c) in self.text.chars().enumerate() {
            out.push(c);
            pos = i + 1;
            for m in self.mentions.iter().filter(|m| m.end == pos) {
                out.push_str(&format!("[{}]", m.concept_id));
            }
        }
        if pos == 0 {
            for m in self.mentions.iter().filter(|m| m.end == 0) {
                out.push_str(&format!("[{}]", m.concept_id));
            }
        }
        out
    }
}

/// Links the mentions of a free-text query; its concepts are the top-1
/// candidates.
pub fn annotate_query(text: &str, linker: &Linker) -> Result<AnnotatedQuery, LinkError> {
    let entities = linker.run("query", text, &SpanSource::Dictionary, &PipelineSettings::default())?;
    let mentions: Vec<QueryMention> = entities
        .iter()
        .filter_map(|e| {
            e.top().map(|c| QueryMention {
                start: e.start,
                end: e.end,
                concept_id: c.concept_id.clone(),
            })
        })
        .collect();
    Ok(AnnotatedQuery {
        text: text.to_string(),
        terms: tokenize_terms(text),
        concept_ids: mentions.iter().map(|m| m.concept_id.clone()).collect(),
        mentions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Sparse,
    HybridBoost,
    ConceptFilter,
}

impl SearchMode {
    pub const ALL: [SearchMode; 3] = [SearchMode::Sparse, SearchMode::HybridBoost, SearchMode::ConceptFilter];

    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::Sparse => "sparse",
            SearchMode::HybridBoost => "hybrid_boost",
            SearchMode::ConceptFilter => "concept_filter",
        }
    }

    /// Row label in the evaluation table.
    pub fn label(self) -> &'static str {
        match self {
            SearchMode::Sparse => "Sparse",
            SearchMode::HybridBoost => "Hybrid",
            SearchMode::ConceptFilter => "MedCT-aug.",
        }
    }
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SearchMode {
    type Err = RetrievalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SearchMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| RetrievalError::InvalidParams(format!("unknown search mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub note_id: String,
    pub score: f64,
    pub matched_concepts: Vec<ConceptId>,
}

/// Document embeddings for the optional dense re-scoring term.
#[derive(Debug, Clone)]
pub struct DenseRescorer {
    vectors: Vec<EmbeddingVector>,
    pub weight: f64,
}

impl DenseRescorer {
    pub fn build(index: &SearchIndex, embedder: &dyn Embedder, weight: f64) -> Result<Self, RetrievalError> {
        let texts: Vec<String> = index.docs.iter().map(IndexedDocument::full_text).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let vectors = if refs.is_empty() { Vec::new() } else { embedder.embed(&refs)? };
        Ok(DenseRescorer { vectors, weight })
    }
}

fn check_search_args(top_n: usize, w_c: f64) -> Result<(), RetrievalError> {
    if top_n == 0 {
        return Err(RetrievalError::InvalidParams("top_n must be at least 1".into()));
    }
    if !(w_c.is_finite() && w_c >= 0.0) {
        return Err(RetrievalError::InvalidParams(format!("w_c = {w_c}")));
    }
    Ok(())
}

/// Ranks documents for `q`. Sparse returns documents sharing a term with
/// the query. Hybrid adds `w_c` per shared concept. The concept filter keeps
/// only documents carrying every query concept and ranks them by BM25; a
/// query without concepts falls back to sparse. Ties go to the smaller
/// note_id.
pub fn search(
    index: &SearchIndex,
    q: &AnnotatedQuery,
    mode: SearchMode,
    top_n: usize,
    w_c: f64,
) -> Result<Vec<SearchHit>, RetrievalError> {
    search_with_dense(index, q, mode, top_n, w_c, None)
}

/// [`search`] with a dense term `weight · cosine(query, document)` added to
/// every candidate's score. Candidates are chosen as without it.
pub fn search_with_dense(
    index: &SearchIndex,
    q: &AnnotatedQuery,
    mode: SearchMode,
    top_n: usize,
    w_c: f64,
    dense: Option<(&DenseRescorer, &EmbeddingVector)>,
) -> Result<Vec<SearchHit>, RetrievalError> {
    check_search_args(top_n, w_c)?;
    let text_scores = index.bm25_all(&q.terms);
    let overlap = |d: u32| -> Vec<ConceptId> {
        index.docs[d as usize]
            .concept_ids
            .intersection(&q.concept_ids)
            .cloned()
            .collect()
    };
    let mode = if mode == SearchMode::ConceptFilter && q.concept_ids.is_empty() {
        SearchMode::Sparse
    } else {
        mode
    };
    let mut hits: Vec<(u32, f64)> = match mode {
        SearchMode::Sparse => text_scores.into_iter().collect(),
        SearchMode::HybridBoost => {
            let mut scores = text_scores;
            if w_c > 0.0 {
                for c in &q.concept_ids {
                    for &d in index.concepts.get(c).map_or(&[][..], Vec::as_slice) {
                        *scores.entry(d).or_default() += w_c;
                    }
                }
            }
            scores.into_iter().collect()
        }
        SearchMode::ConceptFilter => {
            let mut sets = q
                .concept_ids
                .iter()
                .map(|c| index.concepts.get(c).map_or(&[][..], Vec::as_slice));
            let first: BTreeSet<u32> = sets.next().unwrap_or_default().iter().copied().collect();
            let candidates = sets.fold(first, |acc, s| {
                let s: BTreeSet<u32> = s.iter().copied().collect();
                acc.intersection(&s).copied().collect()
            });
            candidates
                .into_iter()
                .map(|d| (d, text_scores.get(&d).copied().unwrap_or(0.0)))
                .collect()
        }
    };
    if let Some((rescorer, qv)) = dense {
        if rescorer.weight != 0.0 {
            for (d, s) in hits.iter_mut() {
                *s += rescorer.weight * cosine(qv, &rescorer.vectors[*d as usize])?;
            }
        }
    }
    // doc numbers follow note_id order, so they break ties directly
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    hits.truncate(top_n);
    Ok(hits
        .into_iter()
        .map(|(d, score)| SearchHit {
            note_id: index.docs[d as usize].note_id.clone(),
            score,
            matched_concepts: overlap(d),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
    /// Pre-annotated concepts; when absent the query must be linked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept_ids: Option<Vec<ConceptId>>,
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<QueryRecord>, RetrievalError> {
    Ok(jsonl::read(path)?)
}

#[derive(Debug, Clone)]
pub struct RetrievalEvaluation {
    pub k: usize,
    pub modes: Vec<(SearchMode, PrfReport)>,
}

impl RetrievalEvaluation {
    pub fn report(&self, mode: SearchMode) -> Option<&PrfReport> {
        self.modes.iter().find(|m| m.0 == mode).map(|m| &m.1)
    }

    /// Rows are modes, columns precision, recall and F1.
    pub fn to_table(&self) -> ReportTable {
        let mut t = ReportTable::new(&["Method", "Precision", "Recall", "F1"])
            .titled("EHR retrieval augmented with MedCT");
        for (mode, r) in &self.modes {
            t.push(vec![
                mode.label().into(),
                Cell::Real(r.precision),
                Cell::Real(r.recall),
                Cell::Real(r.f1),
            ]);
        }
        t.notes
            .push(format!("All metrics are measured at top {} retrieved results.", self.k));
        t
    }
}

/// Runs every query in every mode and scores the top `k` against the
/// judgments.
pub fn evaluate_retrieval(
    index: &SearchIndex,
    queries: &[(String, AnnotatedQuery)],
    judgments: &RetrievalJudgments,
    modes: &[SearchMode],
    k: usize,
    w_c: f64,
) -> Result<RetrievalEvaluation, RetrievalError> {
    let mut out = Vec::with_capacity(modes.len());
    for &mode in modes {
        let mut ranked = BTreeMap::new();
        for (qid, q) in queries {
            let hits = search(index, q, mode, k, w_c)?;
            ranked.insert(qid.clone(), hits.into_iter().map(|h| h.note_id).collect());
        }
        out.push((mode, prf_at_k(&ranked, judgments, k)?));
    }
    Ok(RetrievalEvaluation { k, modes: out })
}

#[derive(Debug, Clone)]
pub struct TagOutcome {
    pub documents: Vec<IndexedDocument>,
    /// `(note_id, reason)` of documents that could not be tagged.
    pub failed: Vec<(String, String)>,
}

/// Attaches the top-1 concept of every linked mention to each document.
pub fn tag_corpus(docs: Vec<RawDocument>, linker: &Linker) -> TagOutcome {
    let settings = PipelineSettings::default();
    let mut documents = Vec::with_capacity(docs.len());
    let mut failed = Vec::new();
    for raw in docs {
        let text = raw.full_text();
        match linker.run(&raw.note_id, &text, &SpanSource::Dictionary, &settings) {
            Ok(entities) => documents.push(IndexedDocument {
                concept_ids: entities
                    .iter()
                    .filter_map(|e| e.top().map(|c| c.concept_id.clone()))
                    .collect(),
                note_id: raw.note_id,
                fields: raw.fields,
            }),
            Err(e) => {
                log::warn!("skipping {}: {e}", raw.note_id);
                failed.push((raw.note_id, e.to_string()));
            }
        }
    }
    TagOutcome { documents, failed }
}
