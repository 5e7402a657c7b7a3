use serde::{Deserialize, Serialize};

use super::detector::MentionDetector;
use super::dictionary::StaticDictionary;
use super::index::{Candidate, ConceptIndex};
use super::LinkError;
use crate::embedding::Embedder;
use crate::terminology::{ConceptGraph, Hierarchy, LanguageFilter};
use crate::text::{char_len, char_slice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkSource {
    Dictionary,
    Embedding,
}

/// A mention span with its ranked concept candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedEntity {
    pub note_id: String,
    pub start: usize,
    pub end: usize,
    /// Span class; when the span source gave none, the top candidate's.
    pub hierarchy: Option<Hierarchy>,
    pub candidates: Vec<Candidate>,
    pub source: LinkSource,
}

impl LinkedEntity {
    pub fn top(&self) -> Option<&Candidate> {
        self.candidates.first()
    }
}

/// A span handed to the linker by an external first stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanInput {
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub hierarchy: Option<Hierarchy>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpanSource {
    /// The built-in synonym dictionary detector.
    Dictionary,
    /// Spans from elsewhere, e.g. decoded BIO output of an NER model.
    External(Vec<SpanInput>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSettings {
    pub use_static: bool,
    pub top_k: usize,
    /// Restrict candidates to the span's hierarchy when it is known.
    pub restrict_hierarchy: bool,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            use_static: true,
            top_k: 5,
            restrict_hierarchy: true,
        }
    }
}

/// Embeds each span's surface text once and ranks index entries by cosine.
pub fn link_spans(
    note_id: &str,
    text: &str,
    spans: &[SpanInput],
    index: &ConceptIndex,
    embedder: &dyn Embedder,
    top_k: usize,
    restrict_hierarchy: bool,
) -> Result<Vec<LinkedEntity>, LinkError> {
    if embedder.fingerprint() != index.fingerprint() {
        return Err(LinkError::Fingerprint {
            index: index.fingerprint().to_string(),
            embedder: embedder.fingerprint(),
        });
    }
    let len = char_len(text);
    for s in spans {
        if s.start >= s.end || s.end > len {
            return Err(LinkError::SpanOutOfBounds {
                start: s.start,
                end: s.end,
                len,
            });
        }
    }
    if spans.is_empty() {
        return Ok(Vec::new());
    }
    let surfaces: Vec<&str> = spans.iter().map(|s| char_slice(text, s.start, s.end)).collect();
    let vectors = embedder.embed(&surfaces)?;
    Ok(spans
        .iter()
        .zip(vectors)
        .map(|(s, v)| {
            let restrict = if restrict_hierarchy { s.hierarchy } else { None };
            let candidates = index.rank(&v, restrict, top_k);
            let hierarchy = s.hierarchy.or_else(|| {
                candidates
                    .first()
                    .and_then(|c| index.get(c.concept_id.as_str()))
                    .map(|e| e.hierarchy)
            });
            LinkedEntity {
                note_id: note_id.to_string(),
                start: s.start,
                end: s.end,
                hierarchy,
                candidates,
                source: LinkSource::Embedding,
            }
        })
        .collect())
}

/// The assembled two-stage pipeline. Immutable once built; share it behind
/// an `Arc` and swap whole instances to pick up new data.
pub struct Linker {
    detector: MentionDetector,
    index: ConceptIndex,
    embedder: Box<dyn Embedder>,
    dictionary: Option<StaticDictionary>,
}

impl Linker {
    pub fn new(
        graph: &ConceptGraph,
        languages: &LanguageFilter,
        index: ConceptIndex,
        embedder: Box<dyn Embedder>,
        dictionary: Option<StaticDictionary>,
    ) -> Result<Self, LinkError> {
        if embedder.fingerprint() != index.fingerprint() {
            return Err(LinkError::Fingerprint {
                index: index.fingerprint().to_string(),
                embedder: embedder.fingerprint(),
            });
        }
        Ok(Linker {
            detector: MentionDetector::new(graph, languages),
            index,
            embedder,
            dictionary,
        })
    }

    pub fn index(&self) -> &ConceptIndex {
        &self.index
    }

    pub fn dictionary(&self) -> Option<&StaticDictionary> {
        self.dictionary.as_ref()
    }

    pub fn detector(&self) -> &MentionDetector {
        &self.detector
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    /// Stage 1 produces spans; stage 2 resolves each one from the static
    /// dictionary (score 1.0) when enabled and the exact mention is known,
    /// otherwise by embedding ranking. Output is ordered by span start.
    pub fn run(
        &self,
        note_id: &str,
        text: &str,
        source: &SpanSource,
        settings: &PipelineSettings,
    ) -> Result<Vec<LinkedEntity>, LinkError> {
        let mut spans: Vec<SpanInput> = match source {
            SpanSource::Dictionary => self
                .detector
                .detect(text)
                .into_iter()
                .map(|d| SpanInput {
                    start: d.start,
                    end: d.end,
                    hierarchy: Some(d.hierarchy),
                })
                .collect(),
            SpanSource::External(spans) => spans.clone(),
        };
        spans.sort_by_key(|s| (s.start, s.end));

        let mut out: Vec<Option<LinkedEntity>> = vec![None; spans.len()];
        let mut pending = Vec::new();
        let mut pending_at = Vec::new();
        let len = char_len(text);
        for (i, s) in spans.iter().enumerate() {
            let hit = if settings.use_static && s.end <= len && s.start < s.end {
                self.dictionary
                    .as_ref()
                    .and_then(|d| d.lookup(char_slice(text, s.start, s.end)))
            } else {
                None
            };
            match hit {
                Some((concept_id, _)) => {
                    let hierarchy = s
                        .hierarchy
                        .or_else(|| self.index.get(concept_id.as_str()).map(|e| e.hierarchy));
                    out[i] = Some(LinkedEntity {
                        note_id: note_id.to_string(),
                        start: s.start,
                        end: s.end,
                        hierarchy,
                        candidates: vec![Candidate {
                            concept_id: concept_id.clone(),
                            score: 1.0,
                        }],
                        source: LinkSource::Dictionary,
                    });
                }
                None => {
                    pending.push(*s);
                    pending_at.push(i);
                }
            }
        }
        let ranked = link_spans(
            note_id,
            text,
            &pending,
            &self.index,
            self.embedder.as_ref(),
            settings.top_k,
            settings.restrict_hierarchy,
        )?;
        for (slot, entity) in pending_at.into_iter().zip(ranked) {
            out[slot] = Some(entity);
        }
        Ok(out.into_iter().flatten().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{BuiltinEmbedder, EmbeddingError, EmbeddingVector};
    use crate::linker::{build_concept_index, build_static_dictionary};
    use crate::annotations::{AnnotatedNote, Annotation};
    use crate::terminology::{ConceptId, DescriptionType, GraphBuilder};

    fn graph() -> ConceptGraph {
        let mut b = GraphBuilder::new();
        b.add_concept("35259002", Hierarchy::Body, "Deltoid muscle").unwrap();
        b.add_description("35259002", "zh", DescriptionType::Syn, "三角肌").unwrap();
        b.add_concept("50070009", Hierarchy::Procedure, "Umbilectomy").unwrap();
        b.add_concept("91936005", Hierarchy::Finding, "Allergy to penicillin").unwrap();
        b.add_description("91936005", "zh", DescriptionType::Syn, "青霉素过敏").unwrap();
        b.build()
    }

    fn linker(dict: Option<StaticDictionary>) -> Linker {
        let g = graph();
        let emb = BuiltinEmbedder::new(512, vec![1, 2, 3]);
        let idx = build_concept_index(&g, &emb, &LanguageFilter::Only(vec!["en".into()])).unwrap();
        Linker::new(&g, &LanguageFilter::All, idx, Box::new(emb), dict).unwrap()
    }

    #[test]
    fn exact_sole_synonym_scores_one() {
        let l = linker(None);
        let text = "Umbilectomy";
        let spans = [SpanInput { start: 0, end: 11, hierarchy: None }];
        let got = link_spans("n", text, &spans, l.index(), l.embedder(), 3, true).unwrap();
        assert_eq!(got[0].candidates[0].concept_id, "50070009");
        assert!((got[0].candidates[0].score - 1.0).abs() < 1e-9);
        assert_eq!(got[0].hierarchy, Some(Hierarchy::Procedure));

        let one = link_spans("n", text, &spans, l.index(), l.embedder(), 1, false).unwrap();
        assert_eq!(one[0].candidates.len(), 1);
    }

    #[test]
    fn fingerprint_mismatch_is_config_error() {
        let l = linker(None);
        let other = BuiltinEmbedder::new(512, vec![1]);
        let spans = [SpanInput { start: 0, end: 1, hierarchy: None }];
        assert!(matches!(
            link_spans("n", "x", &spans, l.index(), &other, 3, true),
            Err(LinkError::Fingerprint { .. })
        ));
    }

    fn dict_for(mention: &str, concept: &str) -> StaticDictionary {
        let n = char_len(mention);
        let note = AnnotatedNote::new(
            "t",
            mention,
            vec![Annotation {
                note_id: "t".into(),
                start: 0,
                end: n,
                hierarchy: Hierarchy::Finding,
                concept_id: ConceptId::new(concept).unwrap(),
            }],
        )
        .unwrap();
        build_static_dictionary(&[note])
    }

    #[test]
    fn static_dictionary_short_circuits() {
        let l = linker(Some(dict_for("青霉素过敏", "91936005")));
        let text = "既往青霉素过敏。";
        let on = l.run("n", text, &SpanSource::Dictionary, &PipelineSettings::default()).unwrap();
        assert_eq!(on.len(), 1);
        assert_eq!(on[0].source, LinkSource::Dictionary);
        assert_eq!(on[0].candidates.len(), 1);
        assert_eq!(on[0].candidates[0].score, 1.0);

        let off = PipelineSettings { use_static: false, ..Default::default() };
        let got = l.run("n", text, &SpanSource::Dictionary, &off).unwrap();
        assert_eq!(got[0].source, LinkSource::Embedding);
        assert_eq!(got[0].candidates[0].concept_id, "91936005");
        assert!(l.run("n", "", &SpanSource::Dictionary, &off).unwrap().is_empty());
    }

    struct Down;

    impl Embedder for Down {
        fn dim(&self) -> usize {
            512
        }
        fn fingerprint(&self) -> String {
            BuiltinEmbedder::new(512, vec![1, 2, 3]).fingerprint()
        }
        fn embed(&self, _: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
            Err(EmbeddingError::Transport("connection refused".into()))
        }
    }

    #[test]
    fn static_hits_do_not_need_the_embedder() {
        let g = graph();
        let idx = build_concept_index(&g, &BuiltinEmbedder::new(512, vec![1, 2, 3]), &LanguageFilter::All).unwrap();
        let l = Linker::new(&g, &LanguageFilter::All, idx, Box::new(Down), Some(dict_for("青霉素过敏", "91936005"))).unwrap();
        let s = PipelineSettings::default();
        assert!(l.run("n", "青霉素过敏", &SpanSource::Dictionary, &s).is_ok());
        assert!(matches!(
            l.run("n", "三角肌", &SpanSource::Dictionary, &s),
            Err(LinkError::Embedding(EmbeddingError::Transport(_)))
        ));
    }

    #[test]
    fn external_spans_are_validated() {
        let l = linker(None);
        let bad = SpanSource::External(vec![SpanInput { start: 2, end: 9, hierarchy: None }]);
        assert!(matches!(
            l.run("n", "abc", &bad, &PipelineSettings::default()),
            Err(LinkError::SpanOutOfBounds { .. })
        ));
    }
}
