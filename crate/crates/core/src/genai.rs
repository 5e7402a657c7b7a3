//! LLM prompt builders (contextual term translation, few-shot NER, summary
//! generation), a chat-completion client, and a resumable batch runner.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Embedder;
use crate::jsonl::{self, JsonlError};
use crate::metrics::{cosine_report, cosine_table, group_display, CosineReport, MetricsError, SUMMARY_PAIRS};
use crate::report::{Cell, ReportTable};
use crate::terminology::{ConceptGraph, Hierarchy, TerminologyError};
use crate::text::char_len;

#[derive(Debug, Error)]
pub enum GenaiError {
    #[error(transparent)]
    Terminology(#[from] TerminologyError),
    #[error("`{synonym}` is not a term of concept {concept_id}")]
    UnknownSynonym { concept_id: String, synonym: String },
    #[error("chat request failed: {0}")]
    Transport(String),
    #[error("chat response malformed: {0}")]
    Protocol(String),
    #[error("invalid client configuration: {0}")]
    Config(String),
    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

const NER_NOTE: &str = "{clinical note}";
const NER_FEWSHOT: &str = r#"{clinical note}

From the above clinical notes, extract all medical entity
mentions as span of texts, and categorize them into
three types: body, procedure, and finding. Output as
JSON format as the following examples:
{"mention": "stomach", "type": "body"},
{"mention": "nasojejunal feedings", "type": "procedure"},
{"mention": "multisystem organ failure",
"type": "finding"}.
Please only output the JSON result."#;

const SUMMARY_INPUT: &str = "{input context: hospital course, discharge diagnosis}";
const SUMMARY_ENTITIES: &str = "{entity mentions from the input}";
const SUMMARY_BODY: &str = "The above is a detailed hospital course and discharge
diagnosis from a medical record. Please summarize it
into an accurate and concise medical summary. The
summary should include the reason for admission,
basis for diagnosis, main treatment measures and their
effects, changes in condition, and status at discharge.";
const SUMMARY_GUIDE: &str = "Also, the above medical records include the following
entities, please include these medical entities in the
medical course summary.
{entity mentions from the input}";
const SUMMARY_TAIL: &str = "Medical summary:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Translation,
    NerFewshot,
    SummaryZero,
    SummaryGuided,
}

/// `{description}\nIn the above context, translate the term {synonym} into {language}:`
pub fn build_translation_prompt(
    graph: &ConceptGraph,
    concept_id: &str,
    synonym: &str,
    target_language: &str,
) -> Result<String, GenaiError> {
    let concept = graph
        .get(concept_id)
        .ok_or_else(|| TerminologyError::NotFound(concept_id.to_string()))?;
    if !concept.has_term(synonym) {
        return Err(GenaiError::UnknownSynonym {
            concept_id: concept_id.to_string(),
            synonym: synonym.to_string(),
        });
    }
    let description = graph.compose_description(concept_id)?;
    Ok(format!(
        "{description}\nIn the above context, translate the term {synonym} into {target_language}:"
    ))
}

pub fn build_ner_fewshot_prompt(note_text: &str) -> String {
    NER_FEWSHOT.replacen(NER_NOTE, note_text, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryMode {
    Zero,
    Guided,
}

/// Zero mode ignores `entities`. Guided mode lists the unique entities in
/// first-occurrence order, one per line.
pub fn build_summary_prompt(input_notes: &str, mode: SummaryMode, entities: &[String]) -> String {
    let mut parts = vec![SUMMARY_INPUT.to_string(), SUMMARY_BODY.to_string()];
    if mode == SummaryMode::Guided {
        let mut seen = BTreeSet::new();
        let unique: Vec<&str> = entities
            .iter()
            .map(String::as_str)
            .filter(|e| seen.insert(*e))
            .collect();
        parts.push(SUMMARY_GUIDE.replacen(SUMMARY_ENTITIES, &unique.join("\n"), 1));
    }
    parts.push(SUMMARY_TAIL.to_string());
    // substitute last so note text containing a placeholder stays literal
    parts.join("\n\n").replacen(SUMMARY_INPUT, input_notes, 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerMention {
    pub mention: String,
    pub hierarchy: Hierarchy,
    /// Character offsets in the source note, when the mention was found.
    pub start: Option<usize>,
    pub end: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NerParse {
    pub mentions: Vec<NerMention>,
    pub diagnostics: Vec<String>,
}

fn hierarchy_from_type(t: &str) -> Option<Hierarchy> {
    match t.trim().to_lowercase().as_str() {
        "body" | "body structure" => Some(Hierarchy::Body),
        "procedure" => Some(Hierarchy::Procedure),
        "finding" | "clinical finding" => Some(Hierarchy::Finding),
        _ => None,
    }
}

/// Byte ranges of balanced `{...}` groups outside of JSON strings.
fn object_candidates(raw: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in raw.char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' if depth > 0 => in_str = true,
            '{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            '}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    out.push(&raw[start..=i]);
                }
            }
            _ => {}
        }
    }
    out
}

/// Extracts `{"mention", "type"}` records from a model answer, tolerating
/// code fences and surrounding prose. With `note` given, each mention is
/// located at its first occurrence after the previous occurrence of the same
/// mention. Never fails; problems are reported as diagnostics.
pub fn parse_ner_response(raw: &str, note: Option<&str>) -> NerParse {
    let mut parse = NerParse::default();
    let mut next_from: BTreeMap<String, usize> = BTreeMap::new();
    for obj in object_candidates(raw) {
        let value: serde_json::Value = match serde_json::from_str(obj) {
            Ok(v) => v,
            Err(e) => {
                parse.diagnostics.push(format!("unparseable record {obj:?}: {e}"));
                continue;
            }
        };
        let (Some(mention), Some(kind)) = (
            value.get("mention").and_then(|v| v.as_str()),
            value.get("type").and_then(|v| v.as_str()),
        ) else {
            parse.diagnostics.push(format!("record without mention/type: {obj}"));
            continue;
        };
        if mention.is_empty() || !raw.contains(mention) {
            parse.diagnostics.push(format!("mention {mention:?} does not appear verbatim in the output"));
            continue;
        }
        let Some(hierarchy) = hierarchy_from_type(kind) else {
            parse.diagnostics.push(format!("unknown type `{kind}` for {mention:?}"));
            continue;
        };
        let (mut start, mut end) = (None, None);
        if let Some(note) = note {
            let from = next_from.get(mention).copied().unwrap_or(0);
            match note.get(from..).and_then(|rest| rest.find(mention)) {
                Some(pos) => {
                    let byte = from + pos;
                    let s = char_len(&note[..byte]);
                    start = Some(s);
                    end = Some(s + char_len(mention));
                    let step = note[byte..].chars().next().map_or(1, char::len_utf8);
                    next_from.insert(mention.to_string(), byte + step);
                }
                None => parse
                    .diagnostics
                    .push(format!("mention {mention:?} not found in the note")),
            }
        }
        parse.mentions.push(NerMention {
            mention: mention.to_string(),
            hierarchy,
            start,
            end,
        });
    }
    if parse.mentions.is_empty() {
        parse.diagnostics.push("no mention records found".to_string());
    }
    parse
}

/// Trims whitespace and one pair of surrounding quotes.
pub fn clean_translation(raw: &str) -> String {
    let t = raw.trim();
    const PAIRS: [(char, char); 6] = [
        ('"', '"'),
        ('\'', '\''),
        ('\u{201c}', '\u{201d}'),
        ('\u{2018}', '\u{2019}'),
        ('\u{300c}', '\u{300d}'),
        ('\u{300e}', '\u{300f}'),
    ];
    for (open, close) in PAIRS {
        if let Some(inner) = t.strip_prefix(open).and_then(|s| s.strip_suffix(close)) {
            return inner.trim().to_string();
        }
    }
    t.to_string()
}

/// One translated synonym, ready to become a description row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Translation {
    pub concept_id: String,
    pub source_term: String,
    pub lang: String,
    pub term: String,
}

/// `descriptions.tsv` body rows (no header) for the translated terms.
pub fn translation_rows(translations: &[Translation], id_prefix: &str) -> String {
    let mut out = String::new();
    for (i, t) in translations.iter().enumerate() {
        let term = t.term.replace(['\t', '\n', '\r'], " ");
        out.push_str(&format!(
            "{id_prefix}{}\t{}\t{}\tSYN\t{term}\n",
            i + 1,
            t.concept_id,
            t.lang
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmClientConfig {
    pub base_url: String,
    pub model_name: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
    pub timeout: Duration,
    pub parallelism: usize,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        LlmClientConfig {
            base_url: "http://127.0.0.1:8000".into(),
            model_name: "default".into(),
            max_output_tokens: 1024,
            temperature: 0.0,
            timeout: Duration::from_secs(60),
            parallelism: 4,
        }
    }
}

impl LlmClientConfig {
    pub fn validate(&self) -> Result<(), GenaiError> {
        if self.parallelism == 0 {
            return Err(GenaiError::Config("parallelism must be at least 1".into()));
        }
        if self.base_url.is_empty() {
            return Err(GenaiError::Config("base_url is empty".into()));
        }
        Ok(())
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, GenaiError>;
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    content: String,
}

/// Client for `POST {base_url}/chat`.
pub struct HttpChatClient {
    config: LlmClientConfig,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(config: LlmClientConfig) -> Result<Self, GenaiError> {
        config.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GenaiError::Config(e.to_string()))?;
        Ok(HttpChatClient { config, http })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String, GenaiError> {
        let url = format!("{}/chat", self.config.base_url.trim_end_matches('/'));
        let body = ChatRequest {
            model: &self.config.model_name,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.config.temperature,
            max_tokens: self.config.max_output_tokens,
        };
        let resp = self
            .http
            .post(&url)
            .json(&body)
            .send()
            .map_err(|e| GenaiError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(GenaiError::Transport(format!("{url} returned {}", resp.status())));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| GenaiError::Protocol(e.to_string()))?;
        Ok(parsed.content)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptItem {
    pub prompt_id: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointStatus {
    Ok,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub prompt_id: String,
    pub status: CheckpointStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum BatchOutcome {
    Ok { output: String },
    Fail { error: String },
    /// Completed by an earlier run according to the checkpoint.
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchResult {
    pub prompt_id: String,
    #[serde(flatten)]
    pub outcome: BatchOutcome,
}

/// Ids recorded as completed; the latest record for an id wins.
pub fn read_checkpoint(path: &Path) -> Result<BTreeSet<String>, GenaiError> {
    if !path.exists() {
        return Ok(BTreeSet::new());
    }
    let mut last: BTreeMap<String, CheckpointStatus> = BTreeMap::new();
    for rec in jsonl::read::<CheckpointRecord>(path)? {
        last.insert(rec.prompt_id, rec.status);
    }
    Ok(last
        .into_iter()
        .filter(|(_, s)| *s == CheckpointStatus::Ok)
        .map(|(id, _)| id)
        .collect())
}

#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    pub parallelism: usize,
    pub checkpoint: Option<PathBuf>,
}

struct Sink {
    path: String,
    file: File,
}

impl Sink {
    fn record(&mut self, prompt_id: &str, status: CheckpointStatus) -> Result<(), GenaiError> {
        let line = serde_json::to_string(&CheckpointRecord {
            prompt_id: prompt_id.to_string(),
            status,
        })
        .expect("record serializes");
        writeln!(self.file, "{line}")
            .and_then(|_| self.file.flush())
            .map_err(|source| GenaiError::Checkpoint {
                path: self.path.clone(),
                source,
            })
    }
}

/// Sends every prompt not yet completed according to the checkpoint, with
/// at most `parallelism` requests in flight. Failures are recorded per item.
/// Results are aligned with `prompts`.
pub fn run_batch(
    prompts: &[PromptItem],
    client: &dyn ChatClient,
    options: &BatchOptions,
) -> Result<Vec<BatchResult>, GenaiError> {
    let workers = options.parallelism.max(1);
    let done = match &options.checkpoint {
        Some(p) => read_checkpoint(p)?,
        None => BTreeSet::new(),
    };
    let sink = match &options.checkpoint {
        Some(p) => Some(Mutex::new(Sink {
            path: p.display().to_string(),
            file: OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|source| GenaiError::Checkpoint {
                    path: p.display().to_string(),
                    source,
                })?,
        })),
        None => None,
    };
    let results: Vec<Mutex<Option<BatchOutcome>>> = prompts
        .iter()
        .map(|p| Mutex::new(done.contains(&p.prompt_id).then_some(BatchOutcome::Done)))
        .collect();
    let todo: Vec<usize> = (0..prompts.len())
        .filter(|&i| !done.contains(&prompts[i].prompt_id))
        .collect();
    let next = AtomicUsize::new(0);
    let sink_error: Mutex<Option<GenaiError>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..workers.min(todo.len()) {
            s.spawn(|| loop {
                let n = next.fetch_add(1, Ordering::Relaxed);
                let Some(&i) = todo.get(n) else { break };
                let item = &prompts[i];
                let (outcome, status) = match client.complete(&item.prompt) {
                    Ok(output) => (BatchOutcome::Ok { output }, CheckpointStatus::Ok),
                    Err(e) => (BatchOutcome::Fail { error: e.to_string() }, CheckpointStatus::Fail),
                };
                if let Some(sink) = &sink {
                    let mut sink = sink.lock().expect("checkpoint lock");
                    if let Err(e) = sink.record(&item.prompt_id, status) {
                        sink_error.lock().expect("error lock").get_or_insert(e);
                    }
                }
                *results[i].lock().expect("result lock") = Some(outcome);
            });
        }
    });
    if let Some(e) = sink_error.into_inner().expect("error lock") {
        return Err(e);
    }
    Ok(prompts
        .iter()
        .zip(results)
        .map(|(p, r)| BatchResult {
            prompt_id: p.prompt_id.clone(),
            outcome: r
                .into_inner()
                .expect("result lock")
                .expect("every item was processed"),
        })
        .collect())
}

/// Aligned summary groups for one evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarySets {
    pub raw: Vec<String>,
    pub human: Vec<String>,
    pub llm: Vec<String>,
    pub medct: Vec<String>,
}

impl SummarySets {
    fn groups(&self) -> Vec<(String, Vec<String>)> {
        vec![
            ("raw".into(), self.raw.clone()),
            ("human".into(), self.human.clone()),
            ("llm".into(), self.llm.clone()),
            ("medct".into(), self.medct.clone()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryEvaluation {
    pub reports: Vec<CosineReport>,
    /// Mean length in characters per group label.
    pub mean_lengths: Vec<(String, f64)>,
}

impl SummaryEvaluation {
    pub fn similarity_table(&self) -> ReportTable {
        cosine_table(&self.reports, "EHR summarization cosine similarity")
    }

    pub fn length_table(&self) -> ReportTable {
        let mut t = ReportTable::new(&["group", "mean_length"]).titled("Mean length in characters");
        for (label, len) in &self.mean_lengths {
            t.push(vec![group_display(label).into(), Cell::Real(*len)]);
        }
        t
    }
}

/// One similarity row per embedder plus per-group mean character lengths.
pub fn evaluate_summary_sets(
    sets: &SummarySets,
    embedders: &[(String, &dyn Embedder)],
) -> Result<SummaryEvaluation, GenaiError> {
    let groups = sets.groups();
    let mut reports = Vec::new();
    for (tag, embedder) in embedders {
        reports.push(cosine_report(&groups, &SUMMARY_PAIRS, *embedder, tag)?);
    }
    if embedders.is_empty() {
        // still validate alignment
        let n = sets.raw.len();
        for (label, texts) in &groups {
            if texts.len() != n {
                return Err(MetricsError::LengthMismatch {
                    group: label.clone(),
                    len: texts.len(),
                    expected: n,
                }
                .into());
            }
        }
    }
    let mean_lengths = groups
        .iter()
        .map(|(label, texts)| {
            let mean = if texts.is_empty() {
                0.0
            } else {
                texts.iter().map(|t| char_len(t) as f64).sum::<f64>() / texts.len() as f64
            };
            (label.clone(), mean)
        })
        .collect();
    Ok(SummaryEvaluation {
        reports,
        mean_lengths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::BuiltinEmbedder;
    use crate::terminology::{DescriptionType, GraphBuilder};

    fn graph() -> ConceptGraph {
        let mut b = GraphBuilder::new();
        b.add_concept("50070009", Hierarchy::Procedure, "Excision of umbilicus (procedure)").unwrap();
        b.add_description("50070009", "en", DescriptionType::Syn, "Umbilectomy").unwrap();
        b.build()
    }

    #[test]
    fn translation_prompt_schema() {
        let g = graph();
        let p = build_translation_prompt(&g, "50070009", "Umbilectomy", "Chinese").unwrap();
        assert!(p.ends_with("\nIn the above context, translate the term Umbilectomy into Chinese:"));
        assert!(p.starts_with(&g.compose_description("50070009").unwrap()));
        assert_eq!(p, build_translation_prompt(&g, "50070009", "Umbilectomy", "Chinese").unwrap());
        assert!(matches!(
            build_translation_prompt(&g, "50070009", "Navel", "Chinese"),
            Err(GenaiError::UnknownSynonym { .. })
        ));
        assert!(build_translation_prompt(&g, "999999", "x", "Chinese").is_err());
    }

    #[test]
    fn ner_prompt_examples() {
        let p = build_ner_fewshot_prompt("");
        assert!(p.starts_with("\n\nFrom the above clinical notes"));
        assert!(p.contains("{\"mention\": \"stomach\", \"type\": \"body\"},"));
        assert!(p.ends_with("Please only output the JSON result."));
    }

    #[test]
    fn summary_modes_differ_by_guide_only() {
        let ents = vec!["pulmonary infection".to_string(), "pulmonary infection".to_string()];
        let zero = build_summary_prompt("notes", SummaryMode::Zero, &ents);
        let guided = build_summary_prompt("notes", SummaryMode::Guided, &ents);
        assert_eq!(zero, build_summary_prompt("notes", SummaryMode::Zero, &[]));
        let guide = "Also, the above medical records include the following\nentities, please include these medical entities in the\nmedical course summary.\npulmonary infection\n\n";
        assert_eq!(guided.replacen(guide, "", 1), zero);
        let empty = build_summary_prompt("notes", SummaryMode::Guided, &[]);
        assert!(empty.contains("medical course summary.\n\n\nMedical summary:"));
    }

    #[test]
    fn parses_fenced_output() {
        let raw = "```json\n{\"mention\": \"chills\", \"type\": \"finding\"},\n{\"mention\": \"emesis\", \"type\": \"finding\"}\n```";
        let note = "(+) emesis, (+) chills, emesis again";
        let p = parse_ner_response(raw, Some(note));
        assert_eq!(p.mentions.len(), 2);
        assert_eq!(p.mentions[0].mention, "chills");
        assert_eq!(p.mentions[0].hierarchy, Hierarchy::Finding);
        assert_eq!((p.mentions[0].start, p.mentions[0].end), (Some(16), Some(22)));
    }

    #[test]
    fn duplicates_map_to_successive_occurrences() {
        let raw = r#"{"mention":"感染","type":"finding"} {"mention":"感染","type":"finding"} {"mention":"感染","type":"finding"}"#;
        let p = parse_ner_response(raw, Some("肺部感染，尿路感染"));
        let starts: Vec<Option<usize>> = p.mentions.iter().map(|m| m.start).collect();
        assert_eq!(starts, vec![Some(2), Some(7), None]);
        assert_eq!(p.diagnostics.len(), 1);
    }

    #[test]
    fn garbage_and_unknown_types() {
        let p = parse_ner_response("I cannot help with that.", None);
        assert!(p.mentions.is_empty());
        assert!(!p.diagnostics.is_empty());
        let p = parse_ner_response(r#"{"mention":"x","type":"drug"} {"mention":"y"}"#, None);
        assert!(p.mentions.is_empty());
        assert_eq!(p.diagnostics.len(), 3);
    }

    #[test]
    fn translation_cleanup_and_rows() {
        assert_eq!(clean_translation("  \"脐切除术\"\n"), "脐切除术");
        assert_eq!(clean_translation("「脐切除术」"), "脐切除术");
        assert_eq!(clean_translation("脐切除术。"), "脐切除术。");
        let rows = translation_rows(
            &[Translation {
                concept_id: "50070009".into(),
                source_term: "Umbilectomy".into(),
                lang: "zh".into(),
                term: "脐切除术".into(),
            }],
            "tr",
        );
        assert_eq!(rows, "tr1\t50070009\tzh\tSYN\t脐切除术\n");
    }

    struct Echo;
    impl ChatClient for Echo {
        fn complete(&self, prompt: &str) -> Result<String, GenaiError> {
            if prompt.contains("slow") {
                Err(GenaiError::Transport("timed out".into()))
            } else {
                Ok(prompt.to_uppercase())
            }
        }
    }

    fn items(prompts: &[&str]) -> Vec<PromptItem> {
        prompts
            .iter()
            .enumerate()
            .map(|(i, p)| PromptItem {
                prompt_id: format!("p{i}"),
                prompt: p.to_string(),
            })
            .collect()
    }

    #[test]
    fn batch_alignment_and_failures() {
        let res = run_batch(
            &items(&["a", "slow", "c"]),
            &Echo,
            &BatchOptions {
                parallelism: 2,
                checkpoint: None,
            },
        )
        .unwrap();
        assert_eq!(res[0].outcome, BatchOutcome::Ok { output: "A".into() });
        assert!(matches!(res[1].outcome, BatchOutcome::Fail { .. }));
        assert_eq!(res[2].outcome, BatchOutcome::Ok { output: "C".into() });
    }

    #[test]
    fn summary_sets_lengths() {
        let sets = SummarySets {
            raw: vec!["abcd".into()],
            human: vec!["ab".into()],
            llm: vec!["a".into()],
            medct: vec!["abc".into()],
        };
        let emb = BuiltinEmbedder::new(32, vec![1]);
        let ev = evaluate_summary_sets(&sets, &[("builtin".into(), &emb as &dyn Embedder)]).unwrap();
        assert_eq!(ev.mean_lengths[0], ("raw".to_string(), 4.0));
        assert_eq!(ev.similarity_table().rows.len(), 1);
        let bad = SummarySets {
            raw: vec!["a".into()],
            ..Default::default()
        };
        assert!(evaluate_summary_sets(&bad, &[]).is_err());
    }
}
