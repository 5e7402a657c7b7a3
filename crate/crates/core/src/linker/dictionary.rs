use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LinkError;
use crate::annotations::AnnotatedNote;
use crate::jsonl;
use crate::terminology::ConceptId;
use crate::text::char_len;

/// Exact mention text → concept counts. Lookups return the most frequent
/// concept, ties going to the smaller concept id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StaticDictionary {
    counts: BTreeMap<String, BTreeMap<ConceptId, u64>>,
}

/// Persisted form: one row per (mention, concept) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryRow {
    pub mention: String,
    pub concept_id: ConceptId,
    pub count: u64,
}

impl StaticDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mention: &str, concept_id: &ConceptId, n: u64) {
        *self
            .counts
            .entry(mention.to_string())
            .or_default()
            .entry(concept_id.clone())
            .or_default() += n;
    }

    /// The majority concept for `mention` and its count.
    pub fn lookup(&self, mention: &str) -> Option<(&ConceptId, u64)> {
        self.counts.get(mention).and_then(majority)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `(mention, winning concept, count)` in mention order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &ConceptId, u64)> {
        self.counts
            .iter()
            .filter_map(|(m, c)| majority(c).map(|(id, n)| (m.as_str(), id, n)))
    }

    pub fn rows(&self) -> Vec<DictionaryRow> {
        self.counts
            .iter()
            .flat_map(|(m, per)| {
                per.iter().map(move |(id, &count)| DictionaryRow {
                    mention: m.clone(),
                    concept_id: id.clone(),
                    count,
                })
            })
            .collect()
    }

    pub fn from_rows(rows: impl IntoIterator<Item = DictionaryRow>) -> Self {
        let mut dict = StaticDictionary::new();
        for r in rows {
            dict.add(&r.mention, &r.concept_id, r.count);
        }
        dict
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), LinkError> {
        let path = path.as_ref();
        jsonl::write(path, self.rows()).map_err(|e| LinkError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, LinkError> {
        let path = path.as_ref();
        let rows = jsonl::read::<DictionaryRow>(path).map_err(|e| LinkError::Format {
            path: path.display().to_string(),
            line: match &e {
                jsonl::JsonlError::Parse { line, .. } => *line,
                jsonl::JsonlError::Io { .. } => 0,
            },
            reason: e.to_string(),
        })?;
        Ok(StaticDictionary::from_rows(rows))
    }

    /// Applies corrections in order; the result depends only on `self` and
    /// the correction sequence.
    pub fn replay<'a>(&self, corrections: impl IntoIterator<Item = &'a Correction>) -> Self {
        let mut dict = self.clone();
        for c in corrections {
            dict.add(&c.mention, &c.concept_id, 1);
        }
        dict
    }
}

fn majority(per: &BTreeMap<ConceptId, u64>) -> Option<(&ConceptId, u64)> {
    // BTreeMap iterates ids ascending; keep the first maximum
    per.iter().fold(None, |best, (id, &n)| match best {
        Some((_, bn)) if bn >= n => best,
        _ => Some((id, n)),
    })
}

/// Counts the gold concept of every annotated mention across `train`.
pub fn build_static_dictionary(train: &[AnnotatedNote]) -> StaticDictionary {
    let mut dict = StaticDictionary::new();
    for note in train {
        for a in &note.annotations {
            dict.add(note.mention(a), &a.concept_id, 1);
        }
    }
    dict
}

/// A reviewer's correction of one linked span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub note_id: String,
    pub start: usize,
    pub end: usize,
    pub mention: String,
    pub concept_id: ConceptId,
}

impl Correction {
    fn validate(&self) -> Result<(), String> {
        if self.note_id.is_empty() {
            return Err("empty note_id".into());
        }
        if self.start >= self.end {
            return Err(format!("empty or inverted span ({}, {})", self.start, self.end));
        }
        if char_len(&self.mention) != self.end - self.start {
            return Err(format!(
                "mention has {} characters but span ({}, {}) covers {}",
                char_len(&self.mention),
                self.start,
                self.end,
                self.end - self.start
            ));
        }
        Ok(())
    }

    /// Parses and validates one JSON record.
    pub fn parse(record: &str) -> Result<Self, String> {
        let c: Correction = serde_json::from_str(record).map_err(|e| e.to_string())?;
        c.validate()?;
        Ok(c)
    }
}

/// Append-only JSONL log of accepted corrections.
#[derive(Debug, Clone)]
pub struct CorrectionLog {
    path: PathBuf,
}

impl CorrectionLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        CorrectionLog { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, corrections: &[Correction]) -> Result<(), LinkError> {
        let io_err = |source| LinkError::Io {
            path: self.path.display().to_string(),
            source,
        };
        let file: File = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(io_err)?;
        let mut w = BufWriter::new(file);
        for c in corrections {
            serde_json::to_writer(&mut w, c).map_err(|e| io_err(e.into()))?;
            w.write_all(b"\n").map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    /// All logged corrections, oldest first. A missing log is empty.
    pub fn entries(&self) -> Result<Vec<Correction>, LinkError> {
        if !self.path.exists() {
            return Ok(Vec::new());
        }
        jsonl::read(&self.path).map_err(|e| LinkError::Format {
            path: self.path.display().to_string(),
            line: match &e {
                jsonl::JsonlError::Parse { line, .. } => *line,
                jsonl::JsonlError::Io { .. } => 0,
            },
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub dictionary: StaticDictionary,
    pub applied: Vec<Correction>,
    /// `(record position, reason)` for every rejected record.
    pub rejected: Vec<(usize, String)>,
}

/// Validates raw JSON correction records, appends the valid ones to `log`
/// (when given) and returns a new dictionary snapshot with their counts
/// added. Invalid records are reported and skipped.
pub fn ingest_corrections<'a>(
    dictionary: &StaticDictionary,
    records: impl IntoIterator<Item = &'a str>,
    log: Option<&CorrectionLog>,
) -> Result<IngestOutcome, LinkError> {
    let mut applied = Vec::new();
    let mut rejected = Vec::new();
    for (i, rec) in records.into_iter().enumerate() {
        match Correction::parse(rec) {
            Ok(c) => applied.push(c),
            Err(reason) => rejected.push((i, reason)),
        }
    }
    if let Some(log) = log {
        log.append(&applied)?;
    }
    Ok(IngestOutcome {
        dictionary: dictionary.replay(&applied),
        applied,
        rejected,
    })
}
