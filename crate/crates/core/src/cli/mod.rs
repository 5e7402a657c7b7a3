//! The `medct` command line. Every subcommand delegates to a library
//! operation; tables go to stdout, diagnostics to stderr.

mod args;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use serde_json::Value;

pub use args::*;

use crate::annotations::{load_annotations, split_folds, write_fold_files, Annotation};
use crate::embedding::{Embedder, EmbedderConfig};
use crate::genai::{
    build_ner_fewshot_prompt, build_summary_prompt, build_translation_prompt, clean_translation,
    evaluate_summary_sets, run_batch, translation_rows, BatchOptions, BatchOutcome, BatchResult,
    HttpChatClient, LlmClientConfig, PromptItem, SummaryMode, SummarySets, Translation,
};
use crate::jsonl;
use crate::linker::{
    build_concept_index, build_static_dictionary, ingest_corrections, ConceptIndex, CorrectionLog,
    LinkedEntity, Linker, PipelineSettings, SpanInput, SpanSource, StaticDictionary,
};
use crate::metrics::{assignment_from_entities, iou_all_pooled, RetrievalJudgments};
use crate::report::{self, ReportTable};
use crate::retrieval::{
    annotate_query, evaluate_retrieval, index_documents, load_corpus, load_queries, search,
    tag_corpus, AnnotatedQuery, Bm25Params, IndexedDocument, RawDocument, SearchIndex, SearchMode,
};
use crate::service::{self, ConfigSource, ServiceConfig};
use crate::terminology::{parse_release, ConceptGraph, Hierarchy};
use crate::text::char_slice;
use crate::{Error, Result};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            concepts,
            descriptions,
            relationships,
            out,
        } => ingest(&concepts, &descriptions, &relationships, &out),
        Command::EmbedIndex { graph, embed, out } => embed_index(&graph, &embed, &out),
        Command::BuildDict {
            annotations,
            notes,
            out,
        } => build_dict(&annotations, notes.as_deref(), &out),
        Command::SplitFolds {
            annotations,
            k,
            seed,
            out_dir,
        } => {
            let notes = load_annotations(&annotations)?;
            let folds = split_folds(&notes, k, seed)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            for (path, fold) in write_fold_files(&folds, &out_dir)?.iter().zip(&folds) {
                println!("{}\t{}", path.display(), fold.len());
            }
            Ok(())
        }
        Command::IngestCorrections {
            dictionary,
            corrections,
            log,
            out,
        } => correct(dictionary.as_deref(), &corrections, &log, &out),
        Command::Link {
            linker,
            notes,
            spans,
            no_static,
            top_k,
            no_restrict,
            out,
        } => {
            let settings = PipelineSettings {
                use_static: !no_static,
                top_k,
                restrict_hierarchy: !no_restrict,
            };
            link(&linker, &notes, spans.as_deref(), &settings, &out)
        }
        Command::TagCorpus {
            linker,
            corpus,
            out,
        } => {
            let (_, linker) = build_linker(&linker)?;
            let outcome = tag_corpus(load_corpus(&corpus)?, &linker);
            let rows: Vec<RawDocument> = outcome
                .documents
                .into_iter()
                .map(|d| RawDocument {
                    note_id: d.note_id,
                    fields: d.fields,
                    concept_ids: Some(d.concept_ids.into_iter().collect()),
                })
                .collect();
            jsonl::write(&out, &rows)?;
            eprintln!("tagged {} documents, {} failed", rows.len(), outcome.failed.len());
            for (id, reason) in &outcome.failed {
                eprintln!("  {id}: {reason}");
            }
            Ok(())
        }
        Command::Index { corpus, k1, b, out } => {
            let docs = load_corpus(&corpus)?
                .into_iter()
                .map(IndexedDocument::try_from)
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let index = index_documents(docs, Bm25Params { k1, b })?;
            index.write(&out)?;
            eprintln!("indexed {} documents", index.len());
            Ok(())
        }
        Command::Search(args) => search_cmd(&args, false),
        Command::EvalSearch(args) => search_cmd(&args, true),
        Command::EvalNel {
            pred,
            gold,
            pooling,
            per_key,
            records,
        } => eval_nel(&pred, &gold, pooling, per_key, records.as_deref()),
        Command::Prompt(p) => prompt(p),
        Command::RunBatch {
            prompts,
            base_url,
            model,
            parallelism,
            timeout_secs,
            max_tokens,
            temperature,
            checkpoint,
            out,
            descriptions_out,
        } => {
            let config = LlmClientConfig {
                base_url,
                model_name: model,
                max_output_tokens: max_tokens,
                temperature,
                timeout: Duration::from_secs(timeout_secs),
                parallelism,
            };
            batch(&prompts, config, checkpoint, &out, descriptions_out.as_deref())
        }
        Command::EvalSummaries {
            input,
            embedders,
            embed_dim,
            embed_url,
            records,
        } => eval_summaries(&input, &embedders, embed_dim, embed_url, records.as_deref()),
        Command::Serve { config } => {
            let path = config
                .or_else(ServiceConfig::from_env)
                .ok_or_else(|| Error::Usage("pass --config or set MEDCT_CONFIG".into()))?;
            let cfg = ServiceConfig::load(&path)?;
            service::serve(cfg, ConfigSource::File(path))
        }
    }
}

fn emit(tables: &[ReportTable], records: Option<&Path>) -> Result<()> {
    for (i, t) in tables.iter().enumerate() {
        if i > 0 {
            println!();
        }
        print!("{}", t.to_tsv());
    }
    if let Some(path) = records {
        report::write_all_records(tables, path)?;
    }
    Ok(())
}

pub fn load_graph(args: &GraphArgs) -> Result<ConceptGraph> {
    match args {
        GraphArgs {
            graph: Some(path), ..
        } => Ok(ConceptGraph::read_snapshot(path)?),
        GraphArgs {
            concepts: Some(c),
            descriptions: Some(d),
            relationships: Some(r),
            ..
        } => Ok(parse_release(c, d, r)?),
        _ => Err(Error::Usage(
            "pass --graph, or --concepts with --descriptions and --relationships".into(),
        )),
    }
}

pub fn build_linker(args: &LinkerArgs) -> Result<(ConceptGraph, Linker)> {
    let graph = load_graph(&args.graph)?;
    let languages = args.embed.languages();
    let embedder = args.embed.config().connect()?;
    let index = match &args.concept_index {
        Some(p) => ConceptIndex::read(p)?,
        None => build_concept_index(&graph, embedder.as_ref(), &languages)?,
    };
    let dictionary = args.dictionary.as_ref().map(StaticDictionary::read).transpose()?;
    let linker = Linker::new(&graph, &languages, index, embedder, dictionary)?;
    Ok((graph, linker))
}

fn ingest(concepts: &Path, descriptions: &Path, relationships: &Path, out: &Path) -> Result<()> {
    let graph = parse_release(concepts, descriptions, relationships)?;
    graph.write_snapshot(out)?;
    let counts = graph.counts();
    let mut t = ReportTable::new(&["hierarchy", "concepts", "synonyms"]).titled("Release statistics");
    for h in Hierarchy::ALL {
        t.push(vec![h.as_str().into(), counts.concepts(h).into(), counts.synonyms(h).into()]);
    }
    t.push(vec![
        "total".into(),
        counts.total_concepts().into(),
        counts.total_synonyms().into(),
    ]);
    emit(&[t], None)
}

fn embed_index(graph: &GraphArgs, embed: &EmbedArgs, out: &Path) -> Result<()> {
    let graph = load_graph(graph)?;
    let embedder = embed.config().connect()?;
    let index = build_concept_index(&graph, embedder.as_ref(), &embed.languages())?;
    index.write(out)?;
    eprintln!("embedded {} concepts ({})", index.len(), index.fingerprint());
    Ok(())
}

fn read_id_list(path: &Path) -> Result<BTreeSet<String>> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(body
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

fn build_dict(annotations: &Path, notes: Option<&Path>, out: &Path) -> Result<()> {
    let mut train = load_annotations(annotations)?;
    if let Some(list) = notes {
        let keep = read_id_list(list)?;
        train.retain(|n| keep.contains(&n.note_id));
    }
    let dict = build_static_dictionary(&train);
    dict.write(out)?;
    eprintln!("{} mentions from {} notes", dict.len(), train.len());
    Ok(())
}

fn correct(dictionary: Option<&Path>, corrections: &Path, log: &Path, out: &Path) -> Result<()> {
    let base = match dictionary {
        Some(p) => StaticDictionary::read(p)?,
        None => StaticDictionary::new(),
    };
    let body = std::fs::read_to_string(corrections).map_err(|e| Error::io(corrections, e))?;
    let records: Vec<&str> = body.lines().filter(|l| !l.trim().is_empty()).collect();
    let log = CorrectionLog::new(log);
    let outcome = ingest_corrections(&base, records.iter().copied(), Some(&log))?;
    // the output is always base + the whole log, so reruns reproduce it
    let dict = base.replay(&log.entries()?);
    dict.write(out)?;
    eprintln!(
        "applied {}, rejected {}",
        outcome.applied.len(),
        outcome.rejected.len()
    );
    for (pos, reason) in &outcome.rejected {
        eprintln!("  record {}: {reason}", pos + 1);
    }
    Ok(())
}

/// Notes in first-seen order from any JSONL whose records carry `note_id`
/// and, at least once per note, `text`.
fn read_notes(path: &Path) -> Result<Vec<(String, String)>> {
    #[derive(Deserialize)]
    struct Row {
        note_id: String,
        #[serde(default)]
        text: Option<String>,
    }
    let mut seen = BTreeMap::new();
    let mut order = Vec::new();
    for (line, row) in jsonl::read_numbered::<Row>(path)? {
        match (seen.contains_key(&row.note_id), row.text) {
            (false, Some(text)) => {
                seen.insert(row.note_id.clone(), ());
                order.push((row.note_id, text));
            }
            (false, None) => {
                return Err(Error::Config(format!(
                    "{}:{line}: first record of note {} has no text",
                    path.display(),
                    row.note_id
                )))
            }
            (true, _) => {}
        }
    }
    Ok(order)
}

fn link(
    args: &LinkerArgs,
    notes: &Path,
    spans: Option<&Path>,
    settings: &PipelineSettings,
    out: &Path,
) -> Result<()> {
    #[derive(Deserialize)]
    struct SpanRow {
        note_id: String,
        #[serde(flatten)]
        span: SpanInput,
    }
    let (_, linker) = build_linker(args)?;
    let external: Option<BTreeMap<String, Vec<SpanInput>>> = match spans {
        Some(p) => {
            let mut by_note: BTreeMap<String, Vec<SpanInput>> = BTreeMap::new();
            for row in jsonl::read::<SpanRow>(p)? {
                by_note.entry(row.note_id).or_default().push(row.span);
            }
            Some(by_note)
        }
        None => None,
    };
    let mut rows: Vec<LinkedEntity> = Vec::new();
    for (note_id, text) in read_notes(notes)? {
        let source = match &external {
            Some(map) => SpanSource::External(map.get(&note_id).cloned().unwrap_or_default()),
            None => SpanSource::Dictionary,
        };
        rows.extend(linker.run(&note_id, &text, &source, settings)?);
    }
    jsonl::write(out, &rows)?;
    eprintln!("linked {} spans", rows.len());
    Ok(())
}

fn parse_modes(spec: &str) -> Result<Vec<SearchMode>> {
    let modes = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<SearchMode>().map_err(|e| Error::Usage(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    if modes.is_empty() {
        return Err(Error::Usage("--modes is empty".into()));
    }
    Ok(modes)
}

fn search_cmd(args: &SearchArgs, evaluate: bool) -> Result<()> {
    if evaluate && args.judgments.is_none() {
        return Err(Error::Usage("eval-search needs --judgments".into()));
    }
    if args.k == 0 {
        return Err(Error::Usage("--k must be at least 1".into()));
    }
    let modes = parse_modes(&args.modes)?;
    let index = SearchIndex::read(&args.index)?;
    let mut linker: Option<Linker> = None;
    let mut annotate = |text: &str| -> Result<AnnotatedQuery> {
        if linker.is_none() {
            linker = Some(build_linker(&args.linker)?.1);
        }
        Ok(annotate_query(text, linker.as_ref().expect("just built"))?)
    };
    let queries: Vec<(String, AnnotatedQuery)> = match (&args.q, &args.queries) {
        (Some(q), _) => vec![("q".to_string(), annotate(q)?)],
        (None, Some(path)) => load_queries(path)?
            .into_iter()
            .map(|r| {
                let q = match r.concept_ids {
                    Some(ids) => AnnotatedQuery::with_concepts(&r.text, ids),
                    None => annotate(&r.text)?,
                };
                Ok((r.query_id, q))
            })
            .collect::<Result<_>>()?,
        (None, None) => return Err(Error::Usage("pass --q or --queries".into())),
    };
    if let Some(j) = &args.judgments {
        let judgments = RetrievalJudgments::load(j)?;
        let ev = evaluate_retrieval(&index, &queries, &judgments, &modes, args.k, args.w_c)?;
        return emit(&[ev.to_table()], args.records.as_deref());
    }
    let mut t = ReportTable::new(&["query_id", "mode", "rank", "note_id", "score", "matched_concepts"])
        .titled("Search results");
    for (qid, q) in &queries {
        if !q.mentions.is_empty() {
            eprintln!("{qid}: {}", q.inline());
        }
        for &mode in &modes {
            for (rank, hit) in search(&index, q, mode, args.k, args.w_c)?.into_iter().enumerate() {
                let concepts: Vec<&str> = hit.matched_concepts.iter().map(|c| c.as_str()).collect();
                t.push(vec![
                    qid.clone().into(),
                    mode.as_str().into(),
                    (rank + 1).into(),
                    hit.note_id.into(),
                    hit.score.into(),
                    concepts.join(",").into(),
                ]);
            }
        }
    }
    emit(&[t], args.records.as_deref())
}

fn read_predictions(path: &Path) -> Result<Vec<Annotation>> {
    let rows: Vec<Value> = jsonl::read(path)?;
    let mut out = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        let bad = |e: serde_json::Error| Error::Config(format!("{}:{}: {e}", path.display(), i + 1));
        if row.get("candidates").is_some() {
            let e: LinkedEntity = serde_json::from_value(row).map_err(bad)?;
            if let Some(top) = e.top() {
                out.push(Annotation {
                    note_id: e.note_id.clone(),
                    start: e.start,
                    end: e.end,
                    hierarchy: e.hierarchy.unwrap_or(Hierarchy::Finding),
                    concept_id: top.concept_id.clone(),
                });
            }
        } else {
            out.push(serde_json::from_value(row).map_err(bad)?);
        }
    }
    Ok(out)
}

fn eval_nel(
    pred: &Path,
    gold: &Path,
    pooling: PoolingArg,
    per_key: bool,
    records: Option<&Path>,
) -> Result<()> {
    let p = assignment_from_entities(&read_predictions(pred)?);
    let gold_notes = load_annotations(gold)?;
    let g = assignment_from_entities(gold_notes.iter().flat_map(|n| &n.annotations));
    let report = iou_all_pooled(&p, &g, pooling.into());
    let mut tables = vec![report.to_table()];
    if per_key {
        tables.push(report.per_key_table());
    }
    emit(&tables, records)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn prompt(cmd: PromptCommand) -> Result<()> {
    match cmd {
        PromptCommand::Translation {
            graph,
            concept_id,
            synonym,
            language,
            all_from,
            lang_tag,
            out,
        } => {
            let graph = load_graph(&graph)?;
            let rows: Vec<Value> = match (concept_id, synonym, all_from) {
                (Some(id), Some(syn), _) => {
                    let p = build_translation_prompt(&graph, &id, &syn, &language)?;
                    if out.is_none() {
                        println!("{p}");
                        return Ok(());
                    }
                    vec![serde_json::json!({
                        "prompt_id": format!("{id}:1"), "prompt": p,
                        "concept_id": id, "term": syn, "lang": lang_tag,
                    })]
                }
                (None, None, Some(from)) => {
                    let mut rows = Vec::new();
                    for concept in graph.concepts() {
                        for (i, syn) in concept.synonyms.iter().enumerate() {
                            if syn.lang != from {
                                continue;
                            }
                            let p = build_translation_prompt(&graph, concept.id.as_str(), &syn.term, &language)?;
                            rows.push(serde_json::json!({
                                "prompt_id": format!("{}:{}", concept.id, i + 1), "prompt": p,
                                "concept_id": concept.id, "term": syn.term, "lang": lang_tag,
                            }));
                        }
                    }
                    rows
                }
                _ => {
                    return Err(Error::Usage(
                        "pass --concept-id with --synonym, or --all-from <lang>".into(),
                    ))
                }
            };
            match out {
                Some(path) => {
                    jsonl::write(&path, &rows)?;
                    eprintln!("wrote {} prompts", rows.len());
                }
                None => print!("{}", jsonl::to_string(&rows)),
            }
            Ok(())
        }
        PromptCommand::Ner { note, text } => {
            let body = match (note, text) {
                (Some(p), _) => read_text(&p)?,
                (None, Some(t)) => t,
                (None, None) => return Err(Error::Usage("pass --note or --text".into())),
            };
            print!("{}", build_ner_fewshot_prompt(&body));
            Ok(())
        }
        PromptCommand::Summary {
            input,
            mode,
            entities,
            link_entities,
            linker,
        } => {
            let body = read_text(&input)?;
            let mode = match mode {
                SummaryModeArg::Zero => SummaryMode::Zero,
                SummaryModeArg::Guided => SummaryMode::Guided,
            };
            let list: Vec<String> = match (entities, link_entities) {
                (Some(p), _) => read_text(&p)?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect(),
                (None, true) => {
                    let (_, linker) = build_linker(&linker)?;
                    linker
                        .run("input", &body, &SpanSource::Dictionary, &PipelineSettings::default())?
                        .iter()
                        .map(|e| char_slice(&body, e.start, e.end).to_string())
                        .collect()
                }
                (None, false) => Vec::new(),
            };
            print!("{}", build_summary_prompt(&body, mode, &list));
            Ok(())
        }
    }
}

fn batch(
    prompts_path: &Path,
    config: LlmClientConfig,
    checkpoint: Option<PathBuf>,
    out: &Path,
    descriptions_out: Option<&Path>,
) -> Result<()> {
    #[derive(Deserialize)]
    struct Row {
        prompt_id: String,
        prompt: String,
        #[serde(default)]
        concept_id: Option<String>,
        #[serde(default)]
        term: Option<String>,
        #[serde(default)]
        lang: Option<String>,
    }
    let rows: Vec<Row> = jsonl::read(prompts_path)?;
    let items: Vec<PromptItem> = rows
        .iter()
        .map(|r| PromptItem {
            prompt_id: r.prompt_id.clone(),
            prompt: r.prompt.clone(),
        })
        .collect();
    let options = BatchOptions {
        parallelism: config.parallelism,
        checkpoint,
    };
    let client = HttpChatClient::new(config)?;
    let results = run_batch(&items, &client, &options)?;

    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out)
        .map_err(|e| Error::io(out, e))?;
    let (mut ok, mut failed, mut skipped) = (0, 0, 0);
    for r in &results {
        match &r.outcome {
            BatchOutcome::Ok { .. } => ok += 1,
            BatchOutcome::Fail { error } => {
                failed += 1;
                eprintln!("  {}: {error}", r.prompt_id);
            }
            BatchOutcome::Done => {
                skipped += 1;
                continue;
            }
        }
        let line = serde_json::to_string(r).expect("result serializes");
        writeln!(file, "{line}").map_err(|e| Error::io(out, e))?;
    }
    eprintln!("ok {ok}, failed {failed}, already done {skipped}");

    if let Some(path) = descriptions_out {
        // latest successful output per prompt across every run so far
        let mut latest: BTreeMap<String, String> = BTreeMap::new();
        for r in jsonl::read::<BatchResult>(out)? {
            if let BatchOutcome::Ok { output } = r.outcome {
                latest.insert(r.prompt_id, output);
            }
        }
        let translations: Vec<Translation> = rows
            .iter()
            .filter_map(|r| {
                let output = latest.get(&r.prompt_id)?;
                Some(Translation {
                    concept_id: r.concept_id.clone()?,
                    source_term: r.term.clone().unwrap_or_default(),
                    lang: r.lang.clone().unwrap_or_else(|| "zh".into()),
                    term: clean_translation(output),
                })
            })
            .filter(|t| !t.term.is_empty())
            .collect();
        let mut body = String::from("id\tconcept_id\tlang\ttype\tterm\n");
        body.push_str(&translation_rows(&translations, "tr"));
        std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    if failed > 0 {
        eprintln!("rerun with the same --checkpoint to retry failed prompts");
    }
    Ok(())
}

fn eval_summaries(
    input: &Path,
    embedders: &str,
    dim: usize,
    url: Option<String>,
    records: Option<&Path>,
) -> Result<()> {
    #[derive(Deserialize)]
    struct Row {
        raw: String,
        human: String,
        llm: String,
        medct: String,
    }
    let mut sets = SummarySets::default();
    for r in jsonl::read::<Row>(input)? {
        sets.raw.push(r.raw);
        sets.human.push(r.human);
        sets.llm.push(r.llm);
        sets.medct.push(r.medct);
    }
    let mut boxes: Vec<(String, Box<dyn Embedder>)> = Vec::new();
    for tag in embedders.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let cfg = match tag {
            "builtin" => EmbedderConfig::builtin(dim),
            "remote" => {
                let mut c = EmbedderConfig::remote(url.clone().unwrap_or_default(), dim);
                if url.is_none() {
                    c.remote_url = None;
                }
                c
            }
            other => return Err(Error::Usage(format!("unknown embedder `{other}`"))),
        };
        boxes.push((tag.to_string(), cfg.connect()?));
    }
    let refs: Vec<(String, &dyn Embedder)> = boxes.iter().map(|(t, b)| (t.clone(), b.as_ref())).collect();
    let ev = evaluate_summary_sets(&sets, &refs)?;
    emit(&[ev.similarity_table(), ev.length_table()], records)
}
