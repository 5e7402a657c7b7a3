//! C ABI for the medct engine.
//!
//! Objects cross the boundary as opaque handles created by `*_load`/`*_new`
//! and released by the matching `*_free`. Every fallible call returns a
//! [`MedctStatus`]; on failure, [`medct_last_error`] describes what went
//! wrong on the calling thread. Strings handed out by the library are
//! NUL-terminated UTF-8 and must be released with [`medct_string_free`].
//! Structured results (linked entities, search hits) are JSON.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use medct::embedding::EmbedderConfig;
use medct::genai::{build_ner_fewshot_prompt, build_summary_prompt, build_translation_prompt, SummaryMode};
use medct::linker::{build_concept_index, Linker, PipelineSettings, SpanSource, StaticDictionary};
use medct::retrieval::{annotate_query, search, AnnotatedQuery, SearchIndex, SearchMode};
use medct::terminology::{parse_release, LanguageFilter, TerminologyError};
use medct::{ConceptGraph, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedctStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A concept or other named item does not exist.
    NotFound = 3,
    /// Malformed input data or an out-of-range argument.
    InvalidInput = 4,
    /// A file could not be read.
    Io = 5,
    /// The embedder failed.
    Embedding = 6,
    /// The library panicked; the handle involved should be discarded.
    Panic = 7,
}

/// Immutable concept graph.
pub struct MedctGraph(ConceptGraph);

/// Entity linker: mention detector, concept index, builtin embedder and an
/// optional static dictionary.
pub struct MedctLinker(Linker);

/// BM25 search index over concept-tagged documents.
pub struct MedctSearchIndex(SearchIndex);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(MedctStatus, String);

impl Failure {
    fn new(status: MedctStatus, msg: impl Into<String>) -> Self {
        Failure(status, msg.into())
    }
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e: Error = e.into();
        let status = match &e {
            Error::Terminology(TerminologyError::NotFound(_)) => MedctStatus::NotFound,
            Error::Terminology(TerminologyError::Io { .. }) | Error::Io { .. } => MedctStatus::Io,
            Error::Embedding(_) => MedctStatus::Embedding,
            Error::Genai(medct::genai::GenaiError::Terminology(TerminologyError::NotFound(_))) => {
                MedctStatus::NotFound
            }
            _ => MedctStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MedctStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MedctStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            MedctStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(MedctStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(MedctStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(MedctStatus::NullArgument, format!("{name} is NULL")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(MedctStatus::NullArgument, "out is NULL"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(MedctStatus::NullArgument, "out is NULL"));
    }
    let c = CString::new(s)
        .map_err(|_| Failure::new(MedctStatus::InvalidInput, "result contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn medct_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL after a
/// successful one. Valid until the next call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn medct_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn medct_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a graph snapshot written by `medct ingest`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medct_graph_load(path: *const c_char, out: *mut *mut MedctGraph) -> MedctStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        put(out, MedctGraph(ConceptGraph::read_snapshot(path)?))
    })
}

/// Parses the three release TSV files.
///
/// # Safety
/// All paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn medct_graph_load_release(
    concepts: *const c_char,
    descriptions: *const c_char,
    relationships: *const c_char,
    out: *mut *mut MedctGraph,
) -> MedctStatus {
    guard(|| {
        let graph = parse_release(
            str_arg(concepts, "concepts")?,
            str_arg(descriptions, "descriptions")?,
            str_arg(relationships, "relationships")?,
        )?;
        put(out, MedctGraph(graph))
    })
}

/// # Safety
/// `graph` must be NULL or a handle from `medct_graph_load*`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn medct_graph_free(graph: *mut MedctGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of concepts and synonyms, in total or, when `hierarchy` is one of
/// "body", "procedure", "finding", in that hierarchy only. Either output
/// pointer may be NULL.
///
/// # Safety
/// `graph` must be a live handle; `hierarchy` NULL or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn medct_graph_counts(
    graph: *const MedctGraph,
    hierarchy: *const c_char,
    concepts: *mut usize,
    synonyms: *mut usize,
) -> MedctStatus {
    guard(|| {
        let counts = handle(graph, "graph")?.0.counts();
        let (c, s) = match opt_str_arg(hierarchy, "hierarchy")? {
            None => (counts.total_concepts(), counts.total_synonyms()),
            Some(h) => {
                let h: medct::Hierarchy = h.parse().map_err(|e: String| Failure::new(MedctStatus::InvalidInput, e))?;
                (counts.concepts(h), counts.synonyms(h))
            }
        };
        if let Some(p) = concepts.as_mut() {
            *p = c;
        }
        if let Some(p) = synonyms.as_mut() {
            *p = s;
        }
        Ok(())
    })
}

/// Concept record as JSON: id, hierarchy, fsn, synonyms.
///
/// # Safety
/// `graph` must be a live handle, `id` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medct_graph_concept_json(
    graph: *const MedctGraph,
    id: *const c_char,
    out: *mut *mut c_char,
) -> MedctStatus {
    guard(|| {
        let id = str_arg(id, "id")?;
        let concept = handle(graph, "graph")?
            .0
            .get(id)
            .ok_or_else(|| Failure::new(MedctStatus::NotFound, format!("concept {id} not found")))?;
        put_string(out, serde_json::json!(concept).to_string())
    })
}

/// Textual description of a concept (name, synonyms, hierarchy, relations),
/// as used for contextual translation.
///
/// # Safety
/// As for [`medct_graph_concept_json`].
#[no_mangle]
pub unsafe extern "C" fn medct_graph_describe(
    graph: *const MedctGraph,
    id: *const c_char,
    out: *mut *mut c_char,
) -> MedctStatus {
    guard(|| {
        let text = handle(graph, "graph")?.0.compose_description(str_arg(id, "id")?)?;
        put_string(out, text)
    })
}

/// Builds a linker with the builtin embedder of dimension `dim` (0 for the
/// default). `languages` ("en,zh", NULL for all) selects synonyms;
/// `dictionary` is an optional static dictionary file.
///
/// # Safety
/// `graph` must be a live handle; string arguments NULL or NUL-terminated;
/// `out` writable. The linker does not borrow the graph.
#[no_mangle]
pub unsafe extern "C" fn medct_linker_new(
    graph: *const MedctGraph,
    dim: usize,
    languages: *const c_char,
    dictionary: *const c_char,
    out: *mut *mut MedctLinker,
) -> MedctStatus {
    guard(|| {
        let graph = &handle(graph, "graph")?.0;
        let languages = LanguageFilter::parse(opt_str_arg(languages, "languages")?.unwrap_or("all"));
        let dim = if dim == 0 { medct::embedding::DEFAULT_DIM } else { dim };
        let embedder = EmbedderConfig::builtin(dim).connect()?;
        let index = build_concept_index(graph, embedder.as_ref(), &languages)?;
        let dictionary = opt_str_arg(dictionary, "dictionary")?
            .map(StaticDictionary::read)
            .transpose()?;
        let linker = Linker::new(graph, &languages, index, embedder, dictionary)?;
        put(out, MedctLinker(linker))
    })
}

/// # Safety
/// `linker` must be NULL or a handle from [`medct_linker_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn medct_linker_free(linker: *mut MedctLinker) {
    if !linker.is_null() {
        drop(Box::from_raw(linker));
    }
}

/// Detects and links the mentions in `text`. Writes a JSON array of
/// entities `{note_id, start, end, hierarchy, candidates, source}` with
/// character offsets.
///
/// # Safety
/// `linker` must be a live handle; `text` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medct_link_json(
    linker: *const MedctLinker,
    text: *const c_char,
    top_k: usize,
    out: *mut *mut c_char,
) -> MedctStatus {
    guard(|| {
        let linker = &handle(linker, "linker")?.0;
        let settings = PipelineSettings {
            top_k: if top_k == 0 { PipelineSettings::default().top_k } else { top_k },
            ..PipelineSettings::default()
        };
        let entities = linker.run("input", str_arg(text, "text")?, &SpanSource::Dictionary, &settings)?;
        put_string(out, serde_json::json!(entities).to_string())
    })
}

/// Loads an index written by `medct index`.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medct_search_index_load(
    path: *const c_char,
    out: *mut *mut MedctSearchIndex,
) -> MedctStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        put(out, MedctSearchIndex(SearchIndex::read(path)?))
    })
}

/// # Safety
/// `index` must be NULL or a handle from [`medct_search_index_load`].
#[no_mangle]
pub unsafe extern "C" fn medct_search_index_free(index: *mut MedctSearchIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Runs a query. `mode` is "sparse", "hybrid_boost" or "concept_filter".
/// With a linker the query is annotated first; with NULL it is plain text.
/// Writes `{"query_concepts": [...], "results": [{note_id, score,
/// matched_concepts}]}`.
///
/// # Safety
/// `index` must be a live handle, `linker` NULL or a live handle, strings
/// NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medct_search_json(
    index: *const MedctSearchIndex,
    linker: *const MedctLinker,
    query: *const c_char,
    mode: *const c_char,
    top_n: usize,
    w_c: f64,
    out: *mut *mut c_char,
) -> MedctStatus {
    guard(|| {
        let index = &handle(index, "index")?.0;
        let text = str_arg(query, "query")?;
        let mode: SearchMode = str_arg(mode, "mode")?.parse()?;
        let q = match linker.as_ref() {
            Some(l) => annotate_query(text, &l.0)?,
            None => AnnotatedQuery::plain(text),
        };
        let hits = search(index, &q, mode, top_n, w_c)?;
        let body = serde_json::json!({ "query_concepts": q.concept_ids, "results": hits });
        put_string(out, body.to_string())
    })
}

/// Contextual translation prompt for one synonym of a concept.
///
/// # Safety
/// `graph` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medct_prompt_translation(
    graph: *const MedctGraph,
    concept_id: *const c_char,
    synonym: *const c_char,
    language: *const c_char,
    out: *mut *mut c_char,
) -> MedctStatus {
    guard(|| {
        let p = build_translation_prompt(
            &handle(graph, "graph")?.0,
            str_arg(concept_id, "concept_id")?,
            str_arg(synonym, "synonym")?,
            str_arg(language, "language")?,
        )?;
        put_string(out, p)
    })
}

/// Few-shot NER prompt for one note.
///
/// # Safety
/// `note` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medct_prompt_ner(note: *const c_char, out: *mut *mut c_char) -> MedctStatus {
    guard(|| put_string(out, build_ner_fewshot_prompt(str_arg(note, "note")?)))
}

/// Summary prompt. With `entities` (newline-separated mentions) the guided
/// variant is built, otherwise the zero-shot one.
///
/// # Safety
/// `input` must be NUL-terminated, `entities` NULL or NUL-terminated, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn medct_prompt_summary(
    input: *const c_char,
    entities: *const c_char,
    out: *mut *mut c_char,
) -> MedctStatus {
    guard(|| {
        let input = str_arg(input, "input")?;
        let (mode, list) = match opt_str_arg(entities, "entities")? {
            Some(e) => (
                SummaryMode::Guided,
                e.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect(),
            ),
            None => (SummaryMode::Zero, Vec::new()),
        };
        put_string(out, build_summary_prompt(input, mode, &list))
    })
}
