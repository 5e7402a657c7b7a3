//! Gold span annotations over clinical notes, the default tokenizer and the
//! BIO label conversion used by token-classification NER models.
//!
//! Annotation JSONL has one record per line:
//!
//! ```text
//! {"note_id": "n1", "text": "...", "start": 0, "end": 3, "hierarchy": "finding", "concept_id": "64379006"}
//! ```
//!
//! `text` is required on the first record of a note and optional after it.
//! Offsets count Unicode scalar values; `end` is exclusive.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::{self, JsonlError};
use crate::terminology::{ConceptId, Hierarchy};
use crate::text::{char_len, char_slice, is_cjk, is_word_char};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{origin}:{line}: {reason}")]
    Invalid {
        origin: String,
        line: usize,
        reason: String,
    },
    #[error("note {note_id}: overlapping gold spans ({}, {}) and ({}, {})", .first.0, .first.1, .second.0, .second.1)]
    Overlap {
        note_id: String,
        first: (usize, usize),
        second: (usize, usize),
    },
    #[error("note {note_id}: span ({start}, {end}) exceeds text length {len}")]
    OutOfBounds {
        note_id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("label/token length mismatch: {labels} labels for {tokens} tokens")]
    LengthMismatch { labels: usize, tokens: usize },
    #[error("cannot split {notes} notes into {k} folds")]
    Folds { notes: usize, k: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub note_id: String,
    pub start: usize,
    pub end: usize,
    pub hierarchy: Hierarchy,
    pub concept_id: ConceptId,
}

/// A note with its gold annotations, sorted by start and pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedNote {
    pub note_id: String,
    pub text: String,
    pub annotations: Vec<Annotation>,
}

impl AnnotatedNote {
    /// Validates bounds and disjointness, sorting the annotations by start.
    pub fn new(
        note_id: impl Into<String>,
        text: impl Into<String>,
        mut annotations: Vec<Annotation>,
    ) -> Result<Self, AnnotationError> {
        let note_id = note_id.into();
        let text = text.into();
        let len = char_len(&text);
        for a in &annotations {
            if a.start >= a.end || a.end > len {
                return Err(AnnotationError::OutOfBounds {
                    note_id,
                    start: a.start,
                    end: a.end,
                    len,
                });
            }
        }
        annotations.sort_by_key(|a| (a.start, a.end));
        for pair in annotations.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(AnnotationError::Overlap {
                    note_id,
                    first: (pair[0].start, pair[0].end),
                    second: (pair[1].start, pair[1].end),
                });
            }
        }
        Ok(AnnotatedNote {
            note_id,
            text,
            annotations,
        })
    }

    /// The surface text covered by an annotation.
    pub fn mention(&self, a: &Annotation) -> &str {
        char_slice(&self.text, a.start, a.end)
    }

    pub fn char_len(&self) -> usize {
        char_len(&self.text)
    }
}

#[derive(Debug, Deserialize)]
struct AnnotationRecord {
    note_id: String,
    #[serde(default)]
    text: Option<String>,
    start: usize,
    end: usize,
    hierarchy: Hierarchy,
    concept_id: String,
}

/// Loads annotation JSONL, grouping records by note in first-seen order.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotatedNote>, AnnotationError> {
    let path = path.as_ref();
    let rows = jsonl::read_numbered::<AnnotationRecord>(path)?;
    group_records(rows, &path.display().to_string())
}

pub fn parse_annotations(
    reader: impl BufRead,
    origin: &str,
) -> Result<Vec<AnnotatedNote>, AnnotationError> {
    let rows = jsonl::parse_lines::<AnnotationRecord>(reader, origin)?;
    group_records(rows, origin)
}

fn group_records(
    rows: Vec<(usize, AnnotationRecord)>,
    origin: &str,
) -> Result<Vec<AnnotatedNote>, AnnotationError> {
    let invalid = |line: usize, reason: String| AnnotationError::Invalid {
        origin: origin.to_string(),
        line,
        reason,
    };
    let mut order: Vec<String> = Vec::new();
    let mut notes: HashMap<String, (String, Vec<Annotation>)> = HashMap::new();
    for (line, rec) in rows {
        let concept_id = ConceptId::new(rec.concept_id).map_err(|e| invalid(line, e.to_string()))?;
        let entry = match notes.get_mut(&rec.note_id) {
            Some(entry) => {
                if let Some(text) = &rec.text {
                    if *text != entry.0 {
                        return Err(invalid(
                            line,
                            format!("text differs from earlier records of note {}", rec.note_id),
                        ));
                    }
                }
                entry
            }
            None => {
                let text = rec.text.clone().ok_or_else(|| {
                    invalid(line, format!("first record of note {} has no text", rec.note_id))
                })?;
                order.push(rec.note_id.clone());
                notes.entry(rec.note_id.clone()).or_insert((text, Vec::new()))
            }
        };
        let len = char_len(&entry.0);
        if rec.start >= rec.end || rec.end > len {
            return Err(invalid(
                line,
                format!(
                    "span ({}, {}) invalid for note {} of length {len}",
                    rec.start, rec.end, rec.note_id
                ),
            ));
        }
        entry.1.push(Annotation {
            note_id: rec.note_id,
            start: rec.start,
            end: rec.end,
            hierarchy: rec.hierarchy,
            concept_id,
        });
    }
    order
        .into_iter()
        .map(|id| {
            let (text, anns) = notes.remove(&id).expect("grouped note");
            AnnotatedNote::new(id, text, anns)
        })
        .collect()
}

/// Serializes notes back to annotation JSONL, text on the first record.
pub fn to_jsonl(notes: &[AnnotatedNote]) -> String {
    let mut rows = Vec::new();
    for note in notes {
        for (i, a) in note.annotations.iter().enumerate() {
            let mut row = serde_json::json!({
                "note_id": note.note_id,
                "start": a.start,
                "end": a.end,
                "hierarchy": a.hierarchy,
                "concept_id": a.concept_id,
            });
            if i == 0 {
                row["text"] = serde_json::Value::String(note.text.clone());
            }
            rows.push(row);
        }
    }
    jsonl::to_string(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

/// Non-empty, non-overlapping token spans in ascending order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tokenization(Vec<TokenSpan>);

impl Tokenization {
    pub fn new(spans: Vec<TokenSpan>) -> Result<Self, String> {
        for (i, t) in spans.iter().enumerate() {
            if t.start >= t.end {
                return Err(format!("token {i} is empty ({}, {})", t.start, t.end));
            }
            if i > 0 && spans[i - 1].end > t.start {
                return Err(format!("token {i} overlaps or precedes token {}", i - 1));
            }
        }
        Ok(Tokenization(spans))
    }

    pub fn spans(&self) -> &[TokenSpan] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Splits text into Latin/digit runs and single CJK characters. Whitespace
/// and punctuation never appear inside a token.
pub fn default_tokenize(text: &str) -> Tokenization {
    let mut spans = Vec::new();
    let mut run_start: Option<usize> = None;
    let mut pos = 0;
    for c in text.chars() {
        if is_word_char(c) {
            run_start.get_or_insert(pos);
        } else {
            if let Some(s) = run_start.take() {
                spans.push(TokenSpan { start: s, end: pos });
            }
            if is_cjk(c) {
                spans.push(TokenSpan {
                    start: pos,
                    end: pos + 1,
                });
            }
        }
        pos += 1;
    }
    if let Some(s) = run_start {
        spans.push(TokenSpan { start: s, end: pos });
    }
    Tokenization(spans)
}

/// The seven token labels: outside, and begin/inside for each hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BioLabel {
    O,
    BeginFind,
    InsideFind,
    BeginProc,
    InsideProc,
    BeginBody,
    InsideBody,
}

impl BioLabel {
    pub const ALL: [BioLabel; 7] = [
        BioLabel::O,
        BioLabel::BeginFind,
        BioLabel::InsideFind,
        BioLabel::BeginProc,
        BioLabel::InsideProc,
        BioLabel::BeginBody,
        BioLabel::InsideBody,
    ];

    pub fn begin(h: Hierarchy) -> Self {
        match h {
            Hierarchy::Finding => BioLabel::BeginFind,
            Hierarchy::Procedure => BioLabel::BeginProc,
            Hierarchy::Body => BioLabel::BeginBody,
        }
    }

    pub fn inside(h: Hierarchy) -> Self {
        match h {
            Hierarchy::Finding => BioLabel::InsideFind,
            Hierarchy::Procedure => BioLabel::InsideProc,
            Hierarchy::Body => BioLabel::InsideBody,
        }
    }

    pub fn hierarchy(self) -> Option<Hierarchy> {
        match self {
            BioLabel::O => None,
            BioLabel::BeginFind | BioLabel::InsideFind => Some(Hierarchy::Finding),
            BioLabel::BeginProc | BioLabel::InsideProc => Some(Hierarchy::Procedure),
            BioLabel::BeginBody | BioLabel::InsideBody => Some(Hierarchy::Body),
        }
    }

    pub fn is_begin(self) -> bool {
        matches!(
            self,
            BioLabel::BeginFind | BioLabel::BeginProc | BioLabel::BeginBody
        )
    }
}

impl fmt::Display for BioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hierarchy() {
            None => f.write_str("O"),
            Some(h) => {
                let prefix = if self.is_begin() { "B" } else { "I" };
                write!(f, "{prefix}-{}", h.bio_class())
            }
        }
    }
}

impl FromStr for BioLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BioLabel::ALL
            .into_iter()
            .find(|l| l.to_string() == s)
            .ok_or_else(|| format!("unknown BIO label `{s}`"))
    }
}

impl Serialize for BioLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BioLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioEncoding {
    pub labels: Vec<BioLabel>,
    /// Annotations that covered no still-unlabeled token.
    pub dropped: Vec<Annotation>,
}

/// Labels each token B-/I-/O. A token that touches an annotation at all is
/// part of it; the first such token gets the B label.
pub fn bio_encode(note: &AnnotatedNote, tok: &Tokenization) -> BioEncoding {
    let mut labels = vec![BioLabel::O; tok.len()];
    let mut dropped = Vec::new();
    let spans = tok.spans();
    for a in &note.annotations {
        let first = spans.partition_point(|t| t.end <= a.start);
        let mut began = false;
        for (i, t) in spans.iter().enumerate().skip(first) {
            if t.start >= a.end {
                break;
            }
            if labels[i] != BioLabel::O {
                continue;
            }
            labels[i] = if began {
                BioLabel::inside(a.hierarchy)
            } else {
                BioLabel::begin(a.hierarchy)
            };
            began = true;
        }
        if !began {
            dropped.push(a.clone());
        }
    }
    BioEncoding { labels, dropped }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedSpan {
    pub start: usize,
    pub end: usize,
    pub hierarchy: Hierarchy,
}

/// Turns label runs back into character spans. An inside label that does not
/// continue a span of its own class opens a new span.
pub fn bio_decode(
    labels: &[BioLabel],
    tok: &Tokenization,
) -> Result<Vec<DecodedSpan>, AnnotationError> {
    if labels.len() != tok.len() {
        return Err(AnnotationError::LengthMismatch {
            labels: labels.len(),
            tokens: tok.len(),
        });
    }
    let mut out = Vec::new();
    let mut open: Option<DecodedSpan> = None;
    for (label, t) in labels.iter().zip(tok.spans()) {
        match label.hierarchy() {
            None => out.extend(open.take()),
            Some(h) => match open.as_mut() {
                Some(span) if !label.is_begin() && span.hierarchy == h => span.end = t.end,
                _ => {
                    out.extend(open.take());
                    open = Some(DecodedSpan {
                        start: t.start,
                        end: t.end,
                        hierarchy: h,
                    });
                }
            },
        }
    }
    out.extend(open);
    Ok(out)
}

/// Shuffles notes with a seeded ChaCha stream and deals them round-robin into
/// `k` folds, so fold sizes differ by at most one and earlier folds are never
/// smaller.
pub fn split_folds(
    notes: &[AnnotatedNote],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<AnnotatedNote>>, AnnotationError> {
    if k < 2 || k > notes.len() {
        return Err(AnnotationError::Folds {
            notes: notes.len(),
            k,
        });
    }
    let mut order: Vec<usize> = (0..notes.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(notes[idx].clone());
    }
    Ok(folds)
}

/// Writes `fold_<i>.txt` files (one note id per line) into `dir`.
pub fn write_fold_files(
    folds: &[Vec<AnnotatedNote>],
    dir: impl AsRef<Path>,
) -> Result<Vec<std::path::PathBuf>, AnnotationError> {
    let dir = dir.as_ref();
    let mut paths = Vec::new();
    for (i, fold) in folds.iter().enumerate() {
        let path = dir.join(format!("fold_{i}.txt"));
        let mut body = String::new();
        for note in fold {
            body.push_str(&note.note_id);
            body.push('\n');
        }
        std::fs::write(&path, body).map_err(|source| AnnotationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn read_fold_file(path: impl AsRef<Path>) -> Result<Vec<String>, AnnotationError> {
    let path = path.as_ref();
    let body = std::fs::read_to_string(path).map_err(|source| AnnotationError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(body
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(note: &str, start: usize, end: usize, h: Hierarchy) -> Annotation {
        Annotation {
            note_id: note.into(),
            start,
            end,
            hierarchy: h,
            concept_id: ConceptId::new("1").unwrap(),
        }
    }

    fn toks(pairs: &[(usize, usize)]) -> Tokenization {
        Tokenization::new(
            pairs
                .iter()
                .map(|&(start, end)| TokenSpan { start, end })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn load_single_record() {
        let src = r#"{"note_id":"n1","text":"abcdef","start":0,"end":3,"hierarchy":"finding","concept_id":"1"}"#;
        let notes = parse_annotations(src.as_bytes(), "mem").unwrap();
        assert_eq!(notes.len(), 1);
        assert_eq!(notes[0].annotations.len(), 1);
        assert_eq!(notes[0].mention(&notes[0].annotations[0]), "abc");
    }

    #[test]
    fn load_rejects_overlap() {
        let src = concat!(
            r#"{"note_id":"n1","text":"abcdef","start":0,"end":3,"hierarchy":"finding","concept_id":"1"}"#,
            "\n",
            r#"{"note_id":"n1","start":2,"end":5,"hierarchy":"finding","concept_id":"2"}"#
        );
        match parse_annotations(src.as_bytes(), "mem") {
            Err(AnnotationError::Overlap {
                note_id,
                first,
                second,
            }) => {
                assert_eq!(note_id, "n1");
                assert_eq!((first, second), ((0, 3), (2, 5)));
            }
            other => panic!("expected overlap, got {other:?}"),
        }
    }

    #[test]
    fn load_empty_and_errors() {
        assert!(parse_annotations("".as_bytes(), "mem").unwrap().is_empty());
        let past_end = r#"{"note_id":"n1","text":"abc","start":0,"end":4,"hierarchy":"body","concept_id":"1"}"#;
        assert!(matches!(
            parse_annotations(past_end.as_bytes(), "mem"),
            Err(AnnotationError::Invalid { line: 1, .. })
        ));
        let garbage = "\n{not json";
        match parse_annotations(garbage.as_bytes(), "mem") {
            Err(AnnotationError::Jsonl(JsonlError::Parse { line, .. })) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let no_text = r#"{"note_id":"n1","start":0,"end":1,"hierarchy":"body","concept_id":"1"}"#;
        assert!(parse_annotations(no_text.as_bytes(), "mem").is_err());
    }

    #[test]
    fn tokenizer_examples() {
        let t = default_tokenize("type 2 diabetes");
        assert_eq!(t.spans(), toks(&[(0, 4), (5, 6), (7, 15)]).spans());
        let t = default_tokenize("胃纳差");
        assert_eq!(t.spans(), toks(&[(0, 1), (1, 2), (2, 3)]).spans());
        assert!(default_tokenize("").is_empty());
        let t = default_tokenize("II型糖尿病, (+) chills");
        assert_eq!(
            t.spans(),
            toks(&[(0, 2), (2, 3), (3, 4), (4, 5), (5, 6), (12, 18)]).spans()
        );
    }

    #[test]
    fn encode_examples() {
        let tok = toks(&[(0, 3), (4, 7)]);
        let note = AnnotatedNote::new("n", "abc def", vec![ann("n", 0, 3, Hierarchy::Finding)]).unwrap();
        assert_eq!(bio_encode(&note, &tok).labels, vec![BioLabel::BeginFind, BioLabel::O]);

        let note = AnnotatedNote::new("n", "abc def", vec![ann("n", 0, 7, Hierarchy::Procedure)]).unwrap();
        assert_eq!(
            bio_encode(&note, &tok).labels,
            vec![BioLabel::BeginProc, BioLabel::InsideProc]
        );

        let note = AnnotatedNote::new("n", "abc def", vec![]).unwrap();
        assert_eq!(bio_encode(&note, &tok).labels, vec![BioLabel::O, BioLabel::O]);
    }

    #[test]
    fn encode_reports_annotation_without_tokens() {
        let note = AnnotatedNote::new("n", "ab  cd", vec![ann("n", 2, 4, Hierarchy::Body)]).unwrap();
        let enc = bio_encode(&note, &default_tokenize(&note.text));
        assert_eq!(enc.labels, vec![BioLabel::O, BioLabel::O]);
        assert_eq!(enc.dropped.len(), 1);
    }

    #[test]
    fn decode_examples() {
        use BioLabel::*;
        let tok = toks(&[(0, 2), (3, 5), (6, 8)]);
        assert_eq!(
            bio_decode(&[BeginFind, InsideFind, O], &tok).unwrap(),
            vec![DecodedSpan { start: 0, end: 5, hierarchy: Hierarchy::Finding }]
        );
        let one = toks(&[(4, 9)]);
        assert_eq!(
            bio_decode(&[InsideBody], &one).unwrap(),
            vec![DecodedSpan { start: 4, end: 9, hierarchy: Hierarchy::Body }]
        );
        let two = toks(&[(0, 2), (3, 5)]);
        assert_eq!(bio_decode(&[BeginFind, BeginFind], &two).unwrap().len(), 2);
        // class change closes the running span
        assert_eq!(bio_decode(&[BeginFind, InsideProc], &two).unwrap().len(), 2);
        assert!(matches!(
            bio_decode(&[O], &two),
            Err(AnnotationError::LengthMismatch { labels: 1, tokens: 2 })
        ));
    }

    #[test]
    fn labels_display_and_parse() {
        let names: Vec<String> = BioLabel::ALL.iter().map(|l| l.to_string()).collect();
        assert_eq!(names, ["O", "B-find", "I-find", "B-proc", "I-proc", "B-body", "I-body"]);
        for l in BioLabel::ALL {
            assert_eq!(l.to_string().parse::<BioLabel>().unwrap(), l);
        }
        assert!("B-drug".parse::<BioLabel>().is_err());
    }

    fn notes(n: usize) -> Vec<AnnotatedNote> {
        (0..n)
            .map(|i| AnnotatedNote::new(format!("n{i}"), "x", vec![]).unwrap())
            .collect()
    }

    #[test]
    fn folds_partition_and_are_deterministic() {
        let all = notes(8);
        let folds = split_folds(&all, 4, 7).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        assert_eq!(folds, split_folds(&all, 4, 7).unwrap());
        let mut ids: Vec<String> = folds.iter().flatten().map(|n| n.note_id.clone()).collect();
        ids.sort();
        let mut expected: Vec<String> = all.iter().map(|n| n.note_id.clone()).collect();
        expected.sort();
        assert_eq!(ids, expected);

        let sizes: Vec<usize> = split_folds(&notes(5), 4, 1).unwrap().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 1, 1, 1]);
        assert!(split_folds(&notes(3), 4, 1).is_err());
        assert!(split_folds(&notes(3), 1, 1).is_err());
    }

    #[test]
    fn fold_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let folds = split_folds(&notes(6), 3, 0).unwrap();
        let paths = write_fold_files(&folds, dir.path()).unwrap();
        let ids = read_fold_file(&paths[1]).unwrap();
        let expected: Vec<String> = folds[1].iter().map(|n| n.note_id.clone()).collect();
        assert_eq!(ids, expected);
    }
}
