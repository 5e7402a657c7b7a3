//! Evaluation metrics: character-level concept-averaged IoU for linking,
//! precision/recall/F1 at k for retrieval, and mean pairwise cosine between
//! aligned text groups.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::Annotation;
use crate::embedding::{cosine, Embedder, EmbeddingError};
use crate::jsonl::{self, JsonlError};
use crate::linker::LinkedEntity;
use crate::report::{Cell, ReportTable};
use crate::terminology::ConceptId;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("key ({0}, {1}) is in neither assignment")]
    UnknownKey(String, String),
    #[error("ranked results for query `{0}` have no relevance judgments")]
    UnknownQuery(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("group `{group}` has {len} texts, expected {expected}")]
    LengthMismatch {
        group: String,
        len: usize,
        expected: usize,
    },
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AssignmentKey {
    pub note_id: String,
    pub concept_id: ConceptId,
}

impl AssignmentKey {
    pub fn new(note_id: impl Into<String>, concept_id: ConceptId) -> Self {
        AssignmentKey {
            note_id: note_id.into(),
            concept_id,
        }
    }
}

/// Which characters of which note each concept was assigned to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CharAssignment {
    sets: BTreeMap<AssignmentKey, BTreeSet<usize>>,
}

/// Anything that assigns a character span of a note to one concept.
pub trait CharSpan {
    fn char_span(&self) -> Option<(&str, &ConceptId, usize, usize)>;
}

impl CharSpan for Annotation {
    fn char_span(&self) -> Option<(&str, &ConceptId, usize, usize)> {
        Some((&self.note_id, &self.concept_id, self.start, self.end))
    }
}

/// Only the top-ranked candidate counts as the prediction.
impl CharSpan for LinkedEntity {
    fn char_span(&self) -> Option<(&str, &ConceptId, usize, usize)> {
        self.top()
            .map(|c| (self.note_id.as_str(), &c.concept_id, self.start, self.end))
    }
}

impl CharAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds offsets `start..end`; repeated keys take the union.
    pub fn add(&mut self, note_id: &str, concept_id: &ConceptId, start: usize, end: usize) {
        if start >= end {
            return;
        }
        self.sets
            .entry(AssignmentKey::new(note_id, concept_id.clone()))
            .or_default()
            .extend(start..end);
    }

    pub fn get(&self, key: &AssignmentKey) -> Option<&BTreeSet<usize>> {
        self.sets.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &AssignmentKey> {
        self.sets.keys()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

pub fn assignment_from_entities<'a, T: CharSpan + 'a>(
    items: impl IntoIterator<Item = &'a T>,
) -> CharAssignment {
    let mut out = CharAssignment::new();
    for item in items {
        if let Some((note, concept, start, end)) = item.char_span() {
            out.add(note, concept, start, end);
        }
    }
    out
}

fn set_iou<T: Ord>(p: Option<&BTreeSet<T>>, g: Option<&BTreeSet<T>>) -> (f64, usize, usize) {
    let empty = BTreeSet::new();
    let p = p.unwrap_or(&empty);
    let g = g.unwrap_or(&empty);
    let inter = p.intersection(g).count();
    let union = p.len() + g.len() - inter;
    let iou = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
    (iou, inter, union)
}

/// |P ∩ G| / |P ∪ G| for one (note, concept) key; a missing side is empty.
pub fn iou_concept(
    p: &CharAssignment,
    g: &CharAssignment,
    key: &AssignmentKey,
) -> Result<f64, MetricsError> {
    let (ps, gs) = (p.get(key), g.get(key));
    if ps.is_none() && gs.is_none() {
        return Err(MetricsError::UnknownKey(
            key.note_id.clone(),
            key.concept_id.to_string(),
        ));
    }
    Ok(set_iou(ps, gs).0)
}

/// How concept occurrences are grouped before averaging.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// One IoU term per (note, concept) pair.
    #[default]
    PerNote,
    /// One IoU term per concept, pooling its characters over all notes.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyScore {
    /// `None` under global pooling.
    pub note_id: Option<String>,
    pub concept_id: ConceptId,
    pub iou: f64,
    pub intersection: usize,
    pub union: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IoUReport {
    pub pooling: Pooling,
    pub per_key: Vec<KeyScore>,
    /// Mean IoU over every key in P ∪ G; 1.0 when both are empty.
    pub iou_all: f64,
    /// Number of averaged keys.
    pub n: usize,
}

impl IoUReport {
    pub fn to_table(&self) -> ReportTable {
        let mut t = ReportTable::new(&["metric", "value"]).titled("Character-level concept-averaged IoU");
        t.push(vec!["iou_all".into(), self.iou_all.into()]);
        t.push(vec!["n".into(), self.n.into()]);
        t.push(vec![
            "pooling".into(),
            match self.pooling {
                Pooling::PerNote => "per-note",
                Pooling::Global => "global",
            }
            .into(),
        ]);
        if self.n == 0 {
            t.notes.push("no predicted or gold assignments; iou_all is vacuously 1".into());
        }
        t
    }

    pub fn per_key_table(&self) -> ReportTable {
        let mut t = ReportTable::new(&["note_id", "concept_id", "iou", "intersection", "union"])
            .titled("Per-key IoU");
        for k in &self.per_key {
            t.push(vec![
                k.note_id.clone().unwrap_or_else(|| "*".into()).into(),
                k.concept_id.to_string().into(),
                k.iou.into(),
                k.intersection.into(),
                k.union.into(),
            ]);
        }
        t
    }
}

/// Mean per-(note, concept) IoU over the keys of P ∪ G.
pub fn iou_all(p: &CharAssignment, g: &CharAssignment) -> IoUReport {
    iou_all_pooled(p, g, Pooling::PerNote)
}

pub fn iou_all_pooled(p: &CharAssignment, g: &CharAssignment, pooling: Pooling) -> IoUReport {
    let per_key: Vec<KeyScore> = match pooling {
        Pooling::PerNote => {
            let keys: BTreeSet<&AssignmentKey> = p.keys().chain(g.keys()).collect();
            keys.into_iter()
                .map(|k| {
                    let (iou, intersection, union) = set_iou(p.get(k), g.get(k));
                    KeyScore {
                        note_id: Some(k.note_id.clone()),
                        concept_id: k.concept_id.clone(),
                        iou,
                        intersection,
                        union,
                    }
                })
                .collect()
        }
        Pooling::Global => {
            let pooled_p = pool(p);
            let pooled_g = pool(g);
            let concepts: BTreeSet<&ConceptId> = pooled_p.keys().chain(pooled_g.keys()).copied().collect();
            concepts
                .into_iter()
                .map(|c| {
                    let (iou, intersection, union) = set_iou(pooled_p.get(c), pooled_g.get(c));
                    KeyScore {
                        note_id: None,
                        concept_id: c.clone(),
                        iou,
                        intersection,
                        union,
                    }
                })
                .collect()
        }
    };
    let n = per_key.len();
    let iou_all = if n == 0 {
        1.0
    } else {
        per_key.iter().map(|k| k.iou).sum::<f64>() / n as f64
    };
    IoUReport {
        pooling,
        per_key,
        iou_all,
        n,
    }
}

fn pool(a: &CharAssignment) -> BTreeMap<&ConceptId, BTreeSet<(&str, usize)>> {
    let mut out: BTreeMap<&ConceptId, BTreeSet<(&str, usize)>> = BTreeMap::new();
    for (k, offsets) in &a.sets {
        out.entry(&k.concept_id)
            .or_default()
            .extend(offsets.iter().map(|&o| (k.note_id.as_str(), o)));
    }
    out
}

/// Relevant note ids per query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RetrievalJudgments {
    relevant: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Deserialize)]
struct JudgmentRecord {
    query_id: String,
    relevant: Vec<String>,
}

impl RetrievalJudgments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, relevant: impl IntoIterator<Item = String>) {
        self.relevant.entry(query_id.into()).or_default().extend(relevant);
    }

    pub fn relevant(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.relevant.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.relevant.keys().map(String::as_str)
    }

    /// Reads `{"query_id": ..., "relevant": [...]}` lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricsError> {
        let mut j = RetrievalJudgments::new();
        for rec in jsonl::read::<JudgmentRecord>(path)? {
            j.insert(rec.query_id, rec.relevant);
        }
        Ok(j)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryPrf {
    pub query_id: String,
    pub hits: usize,
    pub returned: usize,
    pub relevant: usize,
    pub precision: f64,
    /// `None` when the query has no relevant documents.
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrfReport {
    pub k: usize,
    pub per_query: Vec<QueryPrf>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Precision, recall and F1 over the top `k` results of each query, macro
/// averaged. Precision divides by `min(k, returned)`. Queries without any
/// relevant document are left out of the recall and F1 averages.
pub fn prf_at_k(
    ranked: &BTreeMap<String, Vec<String>>,
    judgments: &RetrievalJudgments,
    k: usize,
) -> Result<PrfReport, MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidK);
    }
    let mut per_query = Vec::with_capacity(ranked.len());
    for (qid, docs) in ranked {
        let relevant = judgments
            .relevant(qid)
            .ok_or_else(|| MetricsError::UnknownQuery(qid.clone()))?;
        let top = &docs[..docs.len().min(k)];
        let hits = top.iter().filter(|d| relevant.contains(*d)).count();
        let precision = if top.is_empty() {
            0.0
        } else {
            hits as f64 / top.len() as f64
        };
        let recall = (!relevant.is_empty()).then(|| hits as f64 / relevant.len() as f64);
        per_query.push(QueryPrf {
            query_id: qid.clone(),
            hits,
            returned: top.len(),
            relevant: relevant.len(),
            precision,
            recall,
            f1: recall.map(|r| harmonic(precision, r)),
        });
    }
    Ok(PrfReport {
        k,
        precision: mean(per_query.iter().map(|q| q.precision)),
        recall: mean(per_query.iter().filter_map(|q| q.recall)),
        f1: mean(per_query.iter().filter_map(|q| q.f1)),
        per_query,
    })
}

/// Column pairs of the summarization similarity table.
pub const SUMMARY_PAIRS: [(&str, &str); 5] = [
    ("raw", "human"),
    ("raw", "llm"),
    ("raw", "medct"),
    ("human", "llm"),
    ("human", "medct"),
];

pub fn group_display(label: &str) -> String {
    match label {
        "raw" => "Raw".into(),
        "human" => "Human".into(),
        "llm" => "LLM".into(),
        "medct" => "MedCT".into(),
        other => other.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMean {
    pub a: String,
    pub b: String,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CosineReport {
    pub embedder: String,
    pub pairs: Vec<PairMean>,
}

impl CosineReport {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        self.pairs.iter().find(|p| p.a == a && p.b == b).map(|p| p.mean)
    }
}

/// Mean over aligned examples of cosine(embed(a_i), embed(b_i)) for every
/// requested label pair.
pub fn cosine_report(
    groups: &[(String, Vec<String>)],
    pairs: &[(&str, &str)],
    embedder: &dyn Embedder,
    tag: &str,
) -> Result<CosineReport, MetricsError> {
    let expected = groups.first().map_or(0, |g| g.1.len());
    for (label, texts) in groups {
        if texts.len() != expected {
            return Err(MetricsError::LengthMismatch {
                group: label.clone(),
                len: texts.len(),
                expected,
            });
        }
    }
    let find = |label: &str| {
        groups
            .iter()
            .position(|g| g.0 == label)
            .ok_or_else(|| MetricsError::UnknownGroup(label.to_string()))
    };
    let mut embedded: BTreeMap<usize, Vec<crate::embedding::EmbeddingVector>> = BTreeMap::new();
    let mut out = Vec::new();
    for &(a, b) in pairs {
        let (ia, ib) = (find(a)?, find(b)?);
        for i in [ia, ib] {
            if let std::collections::btree_map::Entry::Vacant(slot) = embedded.entry(i) {
                let texts: Vec<&str> = groups[i].1.iter().map(String::as_str).collect();
                slot.insert(embedder.embed(&texts)?);
            }
        }
        let (va, vb) = (&embedded[&ia], &embedded[&ib]);
        let sims = va
            .iter()
            .zip(vb)
            .map(|(x, y)| cosine(x, y))
            .collect::<Result<Vec<f64>, _>>()?;
        out.push(PairMean {
            a: a.to_string(),
            b: b.to_string(),
            mean: mean(sims.into_iter()),
        });
    }
    Ok(CosineReport {
        embedder: tag.to_string(),
        pairs: out,
    })
}

/// Rows are embedders, columns are the label pairs of the first report.
pub fn cosine_table(reports: &[CosineReport], title: &str) -> ReportTable {
    let headers: Vec<String> = reports.first().map_or_else(Vec::new, |r| {
        r.pairs
            .iter()
            .map(|p| format!("{}/{}", group_display(&p.a), group_display(&p.b)))
            .collect()
    });
    let mut columns = vec!["embedder".to_string()];
    columns.extend(headers);
    let mut t = ReportTable {
        title: Some(title.to_string()),
        columns,
        ..Default::default()
    };
    for r in reports {
        let mut row: Vec<Cell> = vec![r.embedder.clone().into()];
        row.extend(r.pairs.iter().map(|p| Cell::Real(p.mean)));
        t.push(row);
    }
    t
}
