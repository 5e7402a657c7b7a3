use std::collections::BTreeMap;

use aho_corasick::{AhoCorasick, MatchKind};
use serde::{Deserialize, Serialize};

use crate::terminology::{ConceptGraph, ConceptId, Hierarchy, LanguageFilter};
use crate::text::{byte_to_char_table, fold, is_word_char};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedSpan {
    pub start: usize,
    pub end: usize,
    pub hierarchy: Hierarchy,
}

#[derive(Debug, Clone)]
struct Pattern {
    concept_id: ConceptId,
    hierarchy: Hierarchy,
}

/// Dictionary span detector over every synonym in a graph. Latin text is
/// matched case-insensitively, CJK exactly. Matches are chosen greedily left
/// to right, longest first, and never overlap. A match may not start or end
/// in the middle of a Latin/digit word.
#[derive(Debug, Clone)]
pub struct MentionDetector {
    automaton: Option<AhoCorasick>,
    patterns: Vec<Pattern>,
}

impl MentionDetector {
    pub fn new(graph: &ConceptGraph, languages: &LanguageFilter) -> Self {
        // first concept (ascending id) wins a surface form shared by several
        let mut forms: BTreeMap<String, Pattern> = BTreeMap::new();
        for concept in graph.concepts() {
            for syn in concept.synonyms_for(languages) {
                let folded = fold(syn.term.trim());
                if folded.is_empty() {
                    continue;
                }
                forms.entry(folded).or_insert_with(|| Pattern {
                    concept_id: concept.id.clone(),
                    hierarchy: concept.hierarchy,
                });
            }
        }
        let (keys, patterns): (Vec<String>, Vec<Pattern>) = forms.into_iter().unzip();
        let automaton = if keys.is_empty() {
            None
        } else {
            Some(
                AhoCorasick::builder()
                    .match_kind(MatchKind::Standard)
                    .build(&keys)
                    .expect("synonym automaton"),
            )
        };
        MentionDetector { automaton, patterns }
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns.len()
    }

    pub fn detect(&self, text: &str) -> Vec<DetectedSpan> {
        self.detect_with_concepts(text)
            .into_iter()
            .map(|(span, _)| span)
            .collect()
    }

    /// Like [`detect`](Self::detect), also reporting which concept owns the
    /// matched surface form.
    pub fn detect_with_concepts(&self, text: &str) -> Vec<(DetectedSpan, ConceptId)> {
        let Some(automaton) = &self.automaton else {
            return Vec::new();
        };
        let folded = fold(text);
        let chars: Vec<char> = folded.chars().collect();
        let to_char = byte_to_char_table(&folded);
        let mut found: Vec<(usize, usize, usize)> = automaton
            .find_overlapping_iter(&folded)
            .map(|m| (to_char[m.start()], to_char[m.end()], m.pattern().as_usize()))
            .filter(|&(s, e, _)| on_word_boundaries(&chars, s, e))
            .collect();
        found.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut out = Vec::new();
        let mut cursor = 0;
        for (start, end, pat) in found {
            if start < cursor {
                continue;
            }
            let p = &self.patterns[pat];
            out.push((
                DetectedSpan {
                    start,
                    end,
                    hierarchy: p.hierarchy,
                },
                p.concept_id.clone(),
            ));
            cursor = end;
        }
        out
    }
}

fn on_word_boundaries(chars: &[char], start: usize, end: usize) -> bool {
    let starts_clean =
        start == 0 || !is_word_char(chars[start]) || !is_word_char(chars[start - 1]);
    let ends_clean =
        end == chars.len() || !is_word_char(chars[end - 1]) || !is_word_char(chars[end]);
    starts_clean && ends_clean
}

/// One-shot detection; builds the matcher for this call only.
pub fn detect_mentions_dictionary(
    text: &str,
    graph: &ConceptGraph,
    languages: &LanguageFilter,
) -> Vec<DetectedSpan> {
    MentionDetector::new(graph, languages).detect(text)
}
