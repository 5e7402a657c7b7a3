//! HTTP facade over an immutable [`Snapshot`] of graph, linker and search
//! index. `/admin/reload` builds a fresh snapshot off the request path and
//! swaps it in; requests already running keep the one they started with.

mod config;

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

pub use config::{GraphSource, ServiceConfig, CONFIG_ENV};

use crate::embedding::EmbeddingError;
use crate::linker::{
    build_concept_index, Candidate, ConceptIndex, LinkError, LinkSource, Linker, PipelineSettings,
    SpanSource, StaticDictionary,
};
use crate::retrieval::{
    annotate_query, index_documents, load_corpus, search, tag_corpus, Bm25Params, IndexedDocument,
    QueryMention, SearchIndex, SearchMode,
};
use crate::terminology::{parse_release, ConceptGraph, ConceptId, Direction, Hierarchy, Synonym};
use crate::text::char_slice;
use crate::{Error, Result};

pub const SNIPPET_CHARS: usize = 200;

/// Everything a request reads. Never mutated once built.
pub struct Snapshot {
    pub graph: ConceptGraph,
    pub linker: Linker,
    pub search: Option<SearchIndex>,
    pub default_mode: SearchMode,
    pub w_c: f64,
    pub top_n: usize,
}

impl Snapshot {
    /// Loads every file the config names. Blocking.
    pub fn load(cfg: &ServiceConfig) -> Result<Self> {
        let graph = match &cfg.graph {
            GraphSource::Release {
                concepts,
                descriptions,
                relationships,
            } => parse_release(concepts, descriptions, relationships)?,
            GraphSource::Snapshot(p) => ConceptGraph::read_snapshot(p)?,
        };
        let embedder = cfg.embedder.connect()?;
        let index = match &cfg.concept_index {
            Some(p) => ConceptIndex::read(p)?,
            None => build_concept_index(&graph, embedder.as_ref(), &cfg.languages)?,
        };
        let dictionary = cfg.dictionary.as_ref().map(StaticDictionary::read).transpose()?;
        let linker = Linker::new(&graph, &cfg.languages, index, embedder, dictionary)?;
        let search = match (&cfg.search_index, &cfg.corpus) {
            (Some(p), _) => Some(SearchIndex::read(p)?),
            (None, Some(p)) => {
                let raw = load_corpus(p)?;
                let (tagged, untagged): (Vec<_>, Vec<_>) =
                    raw.into_iter().partition(|d| d.concept_ids.is_some());
                let mut docs: Vec<IndexedDocument> = tagged
                    .into_iter()
                    .map(IndexedDocument::try_from)
                    .collect::<std::result::Result<_, _>>()?;
                let outcome = tag_corpus(untagged, &linker);
                if !outcome.failed.is_empty() {
                    log::warn!("{} documents could not be tagged", outcome.failed.len());
                }
                docs.extend(outcome.documents);
                Some(index_documents(docs, Bm25Params::default())?)
            }
            (None, None) => None,
        };
        Ok(Snapshot {
            graph,
            linker,
            search,
            default_mode: cfg.default_mode,
            w_c: cfg.w_c,
            top_n: cfg.top_n,
        })
    }
}

/// Where `/admin/reload` gets its configuration.
#[derive(Debug, Clone)]
pub enum ConfigSource {
    File(PathBuf),
    Fixed(Box<ServiceConfig>),
    /// The snapshot was assembled in memory; reloading is not possible.
    None,
}

pub struct AppState {
    snapshot: RwLock<Arc<Snapshot>>,
    source: ConfigSource,
    reload: tokio::sync::Mutex<()>,
}

impl AppState {
    pub fn new(snapshot: Snapshot, source: ConfigSource) -> Arc<Self> {
        Arc::new(AppState {
            snapshot: RwLock::new(Arc::new(snapshot)),
            source,
            reload: tokio::sync::Mutex::new(()),
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn swap(&self, next: Snapshot) {
        *self.snapshot.write().expect("snapshot lock") = Arc::new(next);
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

impl From<LinkError> for ApiError {
    fn from(e: LinkError) -> Self {
        match &e {
            LinkError::Embedding(EmbeddingError::Transport(_) | EmbeddingError::Protocol(_)) => {
                ApiError(StatusCode::SERVICE_UNAVAILABLE, format!("embedder unavailable: {e}"))
            }
            _ => ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> std::result::Result<T, ApiError> + Send + 'static,
) -> std::result::Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EntityOut {
    pub start: usize,
    pub end: usize,
    pub hierarchy: Option<Hierarchy>,
    pub candidates: Vec<Candidate>,
    pub source: LinkSource,
}

async fn healthz() -> &'static str {
    "ok"
}

async fn handle_link(
    State(state): State<Arc<AppState>>,
    body: axum::body::Bytes,
) -> std::result::Result<Json<serde_json::Value>, ApiError> {
    let value: serde_json::Value =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("invalid JSON body: {e}")))?;
    let text = value
        .get("text")
        .and_then(|t| t.as_str())
        .ok_or_else(|| bad_request("missing string field `text`"))?
        .to_string();
    let snap = state.snapshot();
    let entities = blocking(move || {
        snap.linker
            .run("request", &text, &SpanSource::Dictionary, &PipelineSettings::default())
            .map_err(ApiError::from)
    })
    .await?;
    let out: Vec<EntityOut> = entities
        .into_iter()
        .map(|e| EntityOut {
            start: e.start,
            end: e.end,
            hierarchy: e.hierarchy,
            candidates: e.candidates,
            source: e.source,
        })
        .collect();
    Ok(Json(json!({ "entities": out })))
}

#[derive(Debug, Deserialize)]
struct SearchParams {
    q: Option<String>,
    mode: Option<String>,
    top_n: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SearchResultOut {
    pub note_id: String,
    pub score: f64,
    pub matched_concepts: Vec<ConceptId>,
    pub snippet: String,
}

async fn handle_search(
    State(state): State<Arc<AppState>>,
    Query(params): Query<SearchParams>,
) -> std::result::Result<Json<serde_json::Value>, ApiError> {
    let q = params.q.unwrap_or_default();
    if q.trim().is_empty() {
        return Err(bad_request("query parameter `q` must not be empty"));
    }
    let snap = state.snapshot();
    let mode = match params.mode.as_deref() {
        None | Some("") => snap.default_mode,
        Some(m) => m.parse::<SearchMode>().map_err(|e| bad_request(e.to_string()))?,
    };
    let top_n = match params.top_n.as_deref() {
        None | Some("") => snap.top_n,
        Some(n) => n
            .parse::<usize>()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| bad_request(format!("top_n must be a positive integer, got `{n}`")))?,
    };
    if snap.search.is_none() {
        return Err(ApiError(StatusCode::SERVICE_UNAVAILABLE, "no search index loaded".into()));
    }
    let body = blocking(move || {
        let index = snap.search.as_ref().expect("checked above");
        let annotated = annotate_query(&q, &snap.linker)?;
        let hits = search(index, &annotated, mode, top_n, snap.w_c)
            .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        let results: Vec<SearchResultOut> = hits
            .into_iter()
            .map(|h| {
                let snippet = index
                    .best_field(&h.note_id, &annotated.terms)
                    .map(|(_, text)| char_slice(text, 0, SNIPPET_CHARS).to_string())
                    .unwrap_or_default();
                SearchResultOut {
                    note_id: h.note_id,
                    score: h.score,
                    matched_concepts: h.matched_concepts,
                    snippet,
                }
            })
            .collect();
        let mentions: Vec<QueryMention> = annotated.mentions.clone();
        Ok(json!({
            "query": annotated.text,
            "annotated_query": annotated.inline(),
            "mode": mode,
            "query_concepts": annotated.concept_ids,
            "query_mentions": mentions,
            "results": results,
        }))
    })
    .await?;
    Ok(Json(body))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NeighborOut {
    pub direction: Direction,
    pub type_id: String,
    pub concept_id: ConceptId,
    pub fsn: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConceptOut {
    pub id: ConceptId,
    pub hierarchy: Hierarchy,
    pub fsn: String,
    pub synonyms: Vec<Synonym>,
    pub neighbors: Vec<NeighborOut>,
}

async fn handle_concept(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> std::result::Result<Json<ConceptOut>, ApiError> {
    let snap = state.snapshot();
    let concept = snap
        .graph
        .get(&id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown concept `{id}`")))?;
    let mut neighbors = Vec::new();
    for dir in [Direction::Out, Direction::In] {
        let list = snap
            .graph
            .neighbors(&id, dir)
            .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        neighbors.extend(list.into_iter().map(|(rel, other)| NeighborOut {
            direction: dir,
            type_id: rel.type_id.clone(),
            concept_id: other.id.clone(),
            fsn: other.fsn.clone(),
        }));
    }
    Ok(Json(ConceptOut {
        id: concept.id.clone(),
        hierarchy: concept.hierarchy,
        fsn: concept.fsn.clone(),
        synonyms: concept.synonyms.clone(),
        neighbors,
    }))
}

async fn handle_reload(
    State(state): State<Arc<AppState>>,
) -> std::result::Result<Json<serde_json::Value>, ApiError> {
    let _guard = state.reload.lock().await;
    let source = state.source.clone();
    let next = blocking(move || {
        let cfg = match source {
            ConfigSource::File(p) => ServiceConfig::load(p),
            ConfigSource::Fixed(cfg) => Ok(*cfg),
            ConfigSource::None => Err(Error::Config("this service has no configuration to reload from".into())),
        }
        .map_err(|e| ApiError(StatusCode::CONFLICT, e.to_string()))?;
        Snapshot::load(&cfg).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
    })
    .await?;
    let body = json!({
        "status": "reloaded",
        "concepts": next.graph.len(),
        "documents": next.search.as_ref().map_or(0, SearchIndex::len),
    });
    state.swap(next);
    Ok(Json(body))
}

pub fn router(state: Arc<AppState>, cors_origin: Option<&str>) -> Router {
    let mut app = Router::new()
        .route("/healthz", get(healthz))
        .route("/api/link", post(handle_link))
        .route("/api/search", get(handle_search))
        .route("/api/concepts/{id}", get(handle_concept))
        .route("/admin/reload", post(handle_reload))
        .with_state(state);
    if let Some(origin) = cors_origin {
        let cors = CorsLayer::new().allow_methods(Any).allow_headers(Any);
        let cors = if origin == "*" {
            cors.allow_origin(Any)
        } else {
            match HeaderValue::from_str(origin) {
                Ok(v) => cors.allow_origin(v),
                Err(_) => {
                    log::warn!("ignoring invalid cors_origin `{origin}`");
                    cors
                }
            }
        };
        app = app.layer(cors);
    }
    app
}

/// Loads the snapshot and serves until Ctrl-C.
pub fn serve(cfg: ServiceConfig, source: ConfigSource) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("tokio runtime", e))?;
    let snapshot = Snapshot::load(&cfg)?;
    let state = AppState::new(snapshot, source);
    let app = router(state, cfg.cors_origin.as_deref());
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cfg.listen)
            .await
            .map_err(|e| Error::io(cfg.listen.to_string(), e))?;
        log::info!("listening on {}", cfg.listen);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Error::io(cfg.listen.to_string(), e))
    })
}
