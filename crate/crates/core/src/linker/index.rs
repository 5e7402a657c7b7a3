use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LinkError;
use crate::embedding::{cosine_with_norms, Embedder, EmbeddingVector};
use crate::terminology::{ConceptGraph, ConceptId, Hierarchy, LanguageFilter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub concept_id: ConceptId,
    pub hierarchy: Hierarchy,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub concept_id: ConceptId,
    pub score: f64,
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    dim: usize,
    fingerprint: String,
}

/// One embedding per concept, sorted by concept id, tagged with the
/// fingerprint of the embedder that produced it.
#[derive(Debug, Clone)]
pub struct ConceptIndex {
    dim: usize,
    fingerprint: String,
    entries: Vec<IndexEntry>,
    norms: Vec<f64>,
}

impl ConceptIndex {
    pub fn from_entries(
        dim: usize,
        fingerprint: impl Into<String>,
        mut entries: Vec<IndexEntry>,
    ) -> Result<Self, LinkError> {
        entries.sort_by(|a, b| a.concept_id.cmp(&b.concept_id));
        for (i, e) in entries.iter().enumerate() {
            if e.vector.dim() != dim {
                return Err(LinkError::Index(format!(
                    "concept {} has dimension {}, index dimension is {dim}",
                    e.concept_id,
                    e.vector.dim()
                )));
            }
            if i > 0 && entries[i - 1].concept_id == e.concept_id {
                return Err(LinkError::Index(format!("duplicate entry for {}", e.concept_id)));
            }
        }
        let norms = entries.iter().map(|e| e.vector.norm()).collect();
        Ok(ConceptIndex {
            dim,
            fingerprint: fingerprint.into(),
            entries,
            norms,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&IndexEntry> {
        self.entries
            .binary_search_by(|e| e.concept_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Exhaustive cosine scan. Returns at most `top_k` candidates sorted by
    /// score descending, then concept id ascending.
    pub fn rank(
        &self,
        query: &EmbeddingVector,
        hierarchy: Option<Hierarchy>,
        top_k: usize,
    ) -> Vec<Candidate> {
        if top_k == 0 {
            return Vec::new();
        }
        let qn = query.norm();
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| hierarchy.is_none_or(|h| e.hierarchy == h))
            .map(|(i, e)| (cosine_with_norms(query, qn, &e.vector, self.norms[i]), i))
            .collect();
        // entries are id-sorted, so the position breaks ties by id
        let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if scored.len() > top_k {
            scored.select_nth_unstable_by(top_k - 1, order);
            scored.truncate(top_k);
        }
        scored.sort_unstable_by(order);
        scored
            .into_iter()
            .map(|(score, i)| Candidate {
                concept_id: self.entries[i].concept_id.clone(),
                score,
            })
            .collect()
    }

    /// JSONL: a `{"dim","fingerprint"}` header line, then one entry per line.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), LinkError> {
        let path = path.as_ref();
        let io_err = |source| LinkError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        let header = IndexHeader {
            dim: self.dim,
            fingerprint: self.fingerprint.clone(),
        };
        serde_json::to_writer(&mut w, &header).map_err(|e| io_err(e.into()))?;
        w.write_all(b"\n").map_err(io_err)?;
        for entry in &self.entries {
            serde_json::to_writer(&mut w, entry).map_err(|e| io_err(e.into()))?;
            w.write_all(b"\n").map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, LinkError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let io_err = |source| LinkError::Io {
            path: display.clone(),
            source,
        };
        let format_err = |line: usize, reason: String| LinkError::Format {
            path: display.clone(),
            line,
            reason,
        };
        let reader = BufReader::new(File::open(path).map_err(io_err)?);
        let mut header: Option<IndexHeader> = None;
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            if header.is_none() {
                header = Some(serde_json::from_str(&line).map_err(|e| format_err(i + 1, e.to_string()))?);
            } else {
                entries.push(serde_json::from_str(&line).map_err(|e| format_err(i + 1, e.to_string()))?);
            }
        }
        let header = header.ok_or_else(|| format_err(1, "missing header line".into()))?;
        ConceptIndex::from_entries(header.dim, header.fingerprint, entries)
    }
}

/// Embeds every synonym that passes `languages` (all synonyms when none do)
/// and stores the element-wise mean of the raw vectors per concept.
pub fn build_concept_index(
    graph: &ConceptGraph,
    embedder: &dyn Embedder,
    languages: &LanguageFilter,
) -> Result<ConceptIndex, LinkError> {
    let mut unique: Vec<&str> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut per_concept: Vec<Vec<usize>> = Vec::with_capacity(graph.len());
    for concept in graph.concepts() {
        let ids = concept
            .synonyms_for(languages)
            .into_iter()
            .map(|s| {
                *slot.entry(s.term.as_str()).or_insert_with(|| {
                    unique.push(s.term.as_str());
                    unique.len() - 1
                })
            })
            .collect();
        per_concept.push(ids);
    }
    let vectors = embedder.embed(&unique)?;
    if vectors.len() != unique.len() {
        return Err(LinkError::Index(format!(
            "embedder returned {} vectors for {} texts",
            vectors.len(),
            unique.len()
        )));
    }
    let entries = graph
        .concepts()
        .zip(per_concept)
        .map(|(concept, ids)| IndexEntry {
            concept_id: concept.id.clone(),
            hierarchy: concept.hierarchy,
            vector: EmbeddingVector::mean(ids.iter().map(|&i| &vectors[i]))
                .expect("concepts always carry at least one synonym"),
        })
        .collect();
    ConceptIndex::from_entries(embedder.dim(), embedder.fingerprint(), entries)
}
