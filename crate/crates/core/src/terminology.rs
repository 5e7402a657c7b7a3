//! Terminology release ingestion and the immutable concept graph.
//!
//! A release is three tab-separated files, each with a header row:
//!
//! ```text
//! concepts.tsv:      id  hierarchy  fsn
//! descriptions.tsv:  id  concept_id  lang  type  term
//! relationships.tsv: id  source_id  dest_id  type_id
//! ```
//!
//! `hierarchy` is one of `body`, `procedure`, `finding`; description `type`
//! is `FSN` or `SYN`. Relationship type ids are opaque to the parser.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relationship type id conventionally used for is-a edges.
pub const IS_A: &str = "116680003";

pub const CONCEPTS_HEADER: &[&str] = &["id", "hierarchy", "fsn"];
pub const DESCRIPTIONS_HEADER: &[&str] = &["id", "concept_id", "lang", "type", "term"];
pub const RELATIONSHIPS_HEADER: &[&str] = &["id", "source_id", "dest_id", "type_id"];

const SNAPSHOT_MAGIC: &[u8] = b"MEDCTGRAPH";
const SNAPSHOT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum TerminologyError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad header, expected `{expected}`, found `{found}`")]
    Header {
        path: String,
        expected: String,
        found: String,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("duplicate concept id {0}")]
    DuplicateConcept(ConceptId),
    #[error("{path}:{line}: unknown concept id {id}")]
    UnknownConcept {
        path: String,
        line: usize,
        id: String,
    },
    #[error("invalid concept: {0}")]
    InvalidConcept(String),
    #[error("invalid relationship: {0}")]
    InvalidRelationship(String),
    #[error("concept {0} not found")]
    NotFound(String),
    #[error("invalid concept id `{0}`")]
    InvalidId(String),
    #[error("graph snapshot: {0}")]
    Snapshot(String),
}

/// The three concept families in scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hierarchy {
    Body,
    Procedure,
    Finding,
}

impl Hierarchy {
    pub const ALL: [Hierarchy; 3] = [Hierarchy::Body, Hierarchy::Procedure, Hierarchy::Finding];

    pub fn as_str(self) -> &'static str {
        match self {
            Hierarchy::Body => "body",
            Hierarchy::Procedure => "procedure",
            Hierarchy::Finding => "finding",
        }
    }

    /// Short class name used in BIO labels.
    pub fn bio_class(self) -> &'static str {
        match self {
            Hierarchy::Body => "body",
            Hierarchy::Procedure => "proc",
            Hierarchy::Finding => "find",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Hierarchy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Hierarchy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "body" => Ok(Hierarchy::Body),
            "procedure" => Ok(Hierarchy::Procedure),
            "finding" => Ok(Hierarchy::Finding),
            other => Err(format!(
                "unknown hierarchy `{other}` (expected body, procedure or finding)"
            )),
        }
    }
}

/// A concept identifier: a non-empty string of ASCII digits. Ordering is
/// plain string ordering, which every tie-break in the crate relies on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ConceptId(String);

impl ConceptId {
    pub fn new(id: impl Into<String>) -> Result<Self, TerminologyError> {
        let id = id.into();
        if id.is_empty() || !id.bytes().all(|b| b.is_ascii_digit()) {
            return Err(TerminologyError::InvalidId(id));
        }
        Ok(ConceptId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ConceptId {
    type Error = TerminologyError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        ConceptId::new(value)
    }
}

impl From<ConceptId> for String {
    fn from(id: ConceptId) -> Self {
        id.0
    }
}

impl FromStr for ConceptId {
    type Err = TerminologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConceptId::new(s)
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for ConceptId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl PartialEq<str> for ConceptId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for ConceptId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DescriptionType {
    #[serde(rename = "FSN")]
    Fsn,
    #[serde(rename = "SYN")]
    Syn,
}

impl DescriptionType {
    pub fn as_str(self) -> &'static str {
        match self {
            DescriptionType::Fsn => "FSN",
            DescriptionType::Syn => "SYN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Synonym {
    /// Language tag, kept verbatim.
    pub lang: String,
    pub term: String,
    #[serde(rename = "type")]
    pub kind: DescriptionType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub id: ConceptId,
    pub hierarchy: Hierarchy,
    pub fsn: String,
    /// FSN and SYN descriptions in release order. Never empty in a built graph.
    pub synonyms: Vec<Synonym>,
}

impl Concept {
    /// Synonyms whose language passes `filter`, or all synonyms when none do.
    pub fn synonyms_for(&self, filter: &LanguageFilter) -> Vec<&Synonym> {
        let picked: Vec<&Synonym> = self
            .synonyms
            .iter()
            .filter(|s| filter.accepts(&s.lang))
            .collect();
        if picked.is_empty() {
            self.synonyms.iter().collect()
        } else {
            picked
        }
    }

    pub fn has_term(&self, term: &str) -> bool {
        self.fsn == term || self.synonyms.iter().any(|s| s.term == term)
    }
}

/// Restricts which synonym languages participate in indexing and matching.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum LanguageFilter {
    #[default]
    All,
    Only(Vec<String>),
}

impl LanguageFilter {
    pub fn accepts(&self, lang: &str) -> bool {
        match self {
            LanguageFilter::All => true,
            LanguageFilter::Only(langs) => langs.iter().any(|l| l == lang),
        }
    }

    /// Parses a comma-separated tag list; empty or `all` means no filter.
    pub fn parse(spec: &str) -> Self {
        let langs: Vec<String> = spec
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        if langs.is_empty() || langs.iter().any(|l| l == "all") {
            LanguageFilter::All
        } else {
            LanguageFilter::Only(langs)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relationship {
    pub id: String,
    pub source_id: ConceptId,
    pub dest_id: ConceptId,
    pub type_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Out,
    In,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct HierarchyCounts {
    concepts: [usize; 3],
    synonyms: [usize; 3],
}

impl HierarchyCounts {
    pub fn concepts(&self, h: Hierarchy) -> usize {
        self.concepts[h.slot()]
    }

    pub fn synonyms(&self, h: Hierarchy) -> usize {
        self.synonyms[h.slot()]
    }

    pub fn total_concepts(&self) -> usize {
        self.concepts.iter().sum()
    }

    pub fn total_synonyms(&self) -> usize {
        self.synonyms.iter().sum()
    }
}

/// Immutable directed concept graph. Build with [`GraphBuilder`] or
/// [`parse_release`]; share freely across threads.
#[derive(Debug, Clone, Default)]
pub struct ConceptGraph {
    concepts: BTreeMap<ConceptId, Concept>,
    relationships: Vec<Relationship>,
    outgoing: BTreeMap<ConceptId, Vec<usize>>,
    incoming: BTreeMap<ConceptId, Vec<usize>>,
    counts: HierarchyCounts,
}

impl ConceptGraph {
    pub fn get(&self, id: &str) -> Option<&Concept> {
        self.concepts.get(id)
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    /// Concepts in ascending id order.
    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn relationships(&self) -> &[Relationship] {
        &self.relationships
    }

    pub fn counts(&self) -> &HierarchyCounts {
        &self.counts
    }

    /// Edges touching `id` in the given direction, each paired with the
    /// concept at the other end, sorted by `(type_id, other id)`.
    pub fn neighbors(
        &self,
        id: &str,
        direction: Direction,
    ) -> Result<Vec<(&Relationship, &Concept)>, TerminologyError> {
        if !self.concepts.contains_key(id) {
            return Err(TerminologyError::NotFound(id.to_string()));
        }
        let adjacency = match direction {
            Direction::Out => &self.outgoing,
            Direction::In => &self.incoming,
        };
        let mut out: Vec<(&Relationship, &Concept)> = adjacency
            .get(id)
            .into_iter()
            .flatten()
            .map(|&i| {
                let rel = &self.relationships[i];
                let other = match direction {
                    Direction::Out => &rel.dest_id,
                    Direction::In => &rel.source_id,
                };
                (rel, &self.concepts[other])
            })
            .collect();
        out.sort_by(|a, b| {
            (a.0.type_id.as_str(), a.1.id.as_str()).cmp(&(b.0.type_id.as_str(), b.1.id.as_str()))
        });
        Ok(out)
    }

    /// Textual description of a concept: FSN, synonyms joined by `; `, the
    /// hierarchy name, then one `type_id destination-FSN` line per outbound
    /// relationship. No trailing newline.
    pub fn compose_description(&self, id: &str) -> Result<String, TerminologyError> {
        let concept = self
            .get(id)
            .ok_or_else(|| TerminologyError::NotFound(id.to_string()))?;
        let mut lines = vec![
            concept.fsn.clone(),
            concept
                .synonyms
                .iter()
                .map(|s| s.term.as_str())
                .collect::<Vec<_>>()
                .join("; "),
            concept.hierarchy.as_str().to_string(),
        ];
        for (rel, dest) in self.neighbors(id, Direction::Out)? {
            lines.push(format!("{} {}", rel.type_id, dest.fsn));
        }
        Ok(lines.join("\n"))
    }

    /// Writes the internal binary cache: a magic tag, a format-version byte,
    /// then the concept and relationship tables.
    pub fn write_snapshot(&self, path: impl AsRef<Path>) -> Result<(), TerminologyError> {
        let path = path.as_ref();
        let io_err = |source| TerminologyError::Io {
            path: path.display().to_string(),
            source,
        };
        let body = serde_json::to_vec(&SnapshotBody {
            concepts: self.concepts.values().cloned().collect(),
            relationships: self.relationships.clone(),
        })
        .map_err(|e| TerminologyError::Snapshot(e.to_string()))?;
        let mut file = File::create(path).map_err(io_err)?;
        file.write_all(SNAPSHOT_MAGIC).map_err(io_err)?;
        file.write_all(&[SNAPSHOT_VERSION]).map_err(io_err)?;
        file.write_all(&body).map_err(io_err)
    }

    pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Self, TerminologyError> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| TerminologyError::Io {
                path: path.display().to_string(),
                source,
            })?;
        let rest = bytes
            .strip_prefix(SNAPSHOT_MAGIC)
            .ok_or_else(|| TerminologyError::Snapshot("not a graph snapshot".into()))?;
        match rest.split_first() {
            Some((&SNAPSHOT_VERSION, body)) => {
                let body: SnapshotBody = serde_json::from_slice(body)
                    .map_err(|e| TerminologyError::Snapshot(e.to_string()))?;
                let mut builder = GraphBuilder::new();
                for c in body.concepts {
                    builder.insert_concept(c)?;
                }
                for r in body.relationships {
                    builder.add_relationship(r)?;
                }
                Ok(builder.build())
            }
            Some((v, _)) => Err(TerminologyError::Snapshot(format!(
                "unsupported snapshot version {v}, regenerate it from the release files"
            ))),
            None => Err(TerminologyError::Snapshot("truncated snapshot".into())),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotBody {
    concepts: Vec<Concept>,
    relationships: Vec<Relationship>,
}

/// Incremental graph construction. Concepts must be added before the
/// descriptions and relationships that reference them.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    concepts: BTreeMap<ConceptId, Concept>,
    relationships: Vec<Relationship>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a concept with no descriptions yet. Release ids are 6 to 18 digits.
    pub fn add_concept(
        &mut self,
        id: &str,
        hierarchy: Hierarchy,
        fsn: &str,
    ) -> Result<&mut Self, TerminologyError> {
        if !(6..=18).contains(&id.len()) {
            return Err(TerminologyError::InvalidId(id.to_string()));
        }
        if fsn.trim().is_empty() {
            return Err(TerminologyError::InvalidConcept(format!(
                "concept {id} has an empty fully specified name"
            )));
        }
        let id = ConceptId::new(id)?;
        self.insert_concept(Concept {
            id,
            hierarchy,
            fsn: fsn.to_string(),
            synonyms: Vec::new(),
        })?;
        Ok(self)
    }

    fn insert_concept(&mut self, concept: Concept) -> Result<(), TerminologyError> {
        if self.concepts.contains_key(&concept.id) {
            return Err(TerminologyError::DuplicateConcept(concept.id));
        }
        self.concepts.insert(concept.id.clone(), concept);
        Ok(())
    }

    pub fn add_description(
        &mut self,
        concept_id: &str,
        lang: &str,
        kind: DescriptionType,
        term: &str,
    ) -> Result<&mut Self, TerminologyError> {
        let concept = self
            .concepts
            .get_mut(concept_id)
            .ok_or_else(|| TerminologyError::NotFound(concept_id.to_string()))?;
        concept.synonyms.push(Synonym {
            lang: lang.to_string(),
            term: term.to_string(),
            kind,
        });
        Ok(self)
    }

    pub fn add_relationship(&mut self, rel: Relationship) -> Result<&mut Self, TerminologyError> {
        if rel.source_id == rel.dest_id {
            return Err(TerminologyError::InvalidRelationship(format!(
                "self-loop on {}",
                rel.source_id
            )));
        }
        for end in [&rel.source_id, &rel.dest_id] {
            if !self.concepts.contains_key(end) {
                return Err(TerminologyError::NotFound(end.to_string()));
            }
        }
        self.relationships.push(rel);
        Ok(self)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.concepts.contains_key(id)
    }

    pub fn build(mut self) -> ConceptGraph {
        let mut counts = HierarchyCounts::default();
        for concept in self.concepts.values_mut() {
            if concept.synonyms.is_empty() {
                concept.synonyms.push(Synonym {
                    lang: "en".to_string(),
                    term: concept.fsn.clone(),
                    kind: DescriptionType::Fsn,
                });
            }
            counts.concepts[concept.hierarchy.slot()] += 1;
            counts.synonyms[concept.hierarchy.slot()] += concept.synonyms.len();
        }
        let mut outgoing: BTreeMap<ConceptId, Vec<usize>> = BTreeMap::new();
        let mut incoming: BTreeMap<ConceptId, Vec<usize>> = BTreeMap::new();
        for (i, rel) in self.relationships.iter().enumerate() {
            outgoing.entry(rel.source_id.clone()).or_default().push(i);
            incoming.entry(rel.dest_id.clone()).or_default().push(i);
        }
        ConceptGraph {
            concepts: self.concepts,
            relationships: self.relationships,
            outgoing,
            incoming,
            counts,
        }
    }
}

struct TsvReader {
    path: String,
    lines: std::iter::Enumerate<std::io::Lines<BufReader<File>>>,
    width: usize,
}

impl TsvReader {
    fn open(path: &Path, header: &[&str]) -> Result<Self, TerminologyError> {
        let display = path.display().to_string();
        let file = File::open(path).map_err(|source| TerminologyError::Io {
            path: display.clone(),
            source,
        })?;
        let mut reader = TsvReader {
            path: display,
            lines: BufReader::new(file).lines().enumerate(),
            width: header.len(),
        };
        let expected = header.join("\t");
        let found = match reader.lines.next() {
            Some((_, line)) => reader.check_io(line)?,
            None => String::new(),
        };
        if found.trim_end_matches('\r') != expected {
            return Err(TerminologyError::Header {
                path: reader.path,
                expected,
                found,
            });
        }
        Ok(reader)
    }

    fn check_io(&self, line: std::io::Result<String>) -> Result<String, TerminologyError> {
        line.map_err(|source| TerminologyError::Io {
            path: self.path.clone(),
            source,
        })
    }

    /// Next data row as (1-based line number, columns).
    fn next_row(&mut self) -> Result<Option<(usize, Vec<String>)>, TerminologyError> {
        while let Some((idx, line)) = self.lines.next() {
            let line = self.check_io(line)?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let cols: Vec<String> = line.split('\t').map(String::from).collect();
            if cols.len() != self.width {
                return Err(self.malformed(
                    idx + 1,
                    format!("expected {} columns, found {}", self.width, cols.len()),
                ));
            }
            return Ok(Some((idx + 1, cols)));
        }
        Ok(None)
    }

    fn malformed(&self, line: usize, reason: impl Into<String>) -> TerminologyError {
        TerminologyError::Malformed {
            path: self.path.clone(),
            line,
            reason: reason.into(),
        }
    }
}

/// Parses a release into a [`ConceptGraph`].
pub fn parse_release(
    concepts_file: impl AsRef<Path>,
    descriptions_file: impl AsRef<Path>,
    relationships_file: impl AsRef<Path>,
) -> Result<ConceptGraph, TerminologyError> {
    let mut builder = GraphBuilder::new();

    let mut concepts = TsvReader::open(concepts_file.as_ref(), CONCEPTS_HEADER)?;
    while let Some((line, cols)) = concepts.next_row()? {
        let hierarchy: Hierarchy = cols[1]
            .parse()
            .map_err(|e: String| concepts.malformed(line, e))?;
        match builder.add_concept(&cols[0], hierarchy, &cols[2]) {
            Ok(_) => {}
            Err(TerminologyError::DuplicateConcept(id)) => {
                return Err(TerminologyError::DuplicateConcept(id))
            }
            Err(e) => return Err(concepts.malformed(line, e.to_string())),
        }
    }

    let mut descriptions = TsvReader::open(descriptions_file.as_ref(), DESCRIPTIONS_HEADER)?;
    while let Some((line, cols)) = descriptions.next_row()? {
        let kind = match cols[3].as_str() {
            "FSN" => DescriptionType::Fsn,
            "SYN" => DescriptionType::Syn,
            other => {
                return Err(descriptions.malformed(
                    line,
                    format!("unknown description type `{other}` (expected FSN or SYN)"),
                ))
            }
        };
        if cols[4].is_empty() {
            return Err(descriptions.malformed(line, "empty term"));
        }
        if !builder.contains(&cols[1]) {
            return Err(TerminologyError::UnknownConcept {
                path: descriptions.path.clone(),
                line,
                id: cols[1].clone(),
            });
        }
        builder.add_description(&cols[1], &cols[2], kind, &cols[4])?;
    }

    let mut relationships = TsvReader::open(relationships_file.as_ref(), RELATIONSHIPS_HEADER)?;
    while let Some((line, cols)) = relationships.next_row()? {
        for id in [&cols[1], &cols[2]] {
            if !builder.contains(id) {
                return Err(TerminologyError::UnknownConcept {
                    path: relationships.path.clone(),
                    line,
                    id: id.clone(),
                });
            }
        }
        if cols[3].is_empty() || !cols[3].bytes().all(|b| b.is_ascii_digit()) {
            return Err(relationships.malformed(line, format!("bad type id `{}`", cols[3])));
        }
        let rel = Relationship {
            id: cols[0].clone(),
            source_id: ConceptId::new(cols[1].clone())?,
            dest_id: ConceptId::new(cols[2].clone())?,
            type_id: cols[3].clone(),
        };
        builder
            .add_relationship(rel)
            .map_err(|e| relationships.malformed(line, e.to_string()))?;
    }

    Ok(builder.build())
}
