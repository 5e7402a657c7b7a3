use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::embedding::{EmbedderConfig, EmbedderKind};
use crate::retrieval::{SearchMode, DEFAULT_CONCEPT_WEIGHT};
use crate::terminology::LanguageFilter;
use crate::{Error, Result};

/// Env var naming the service config file.
pub const CONFIG_ENV: &str = "MEDCT_CONFIG";

/// Where the terminology comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    Release {
        concepts: PathBuf,
        descriptions: PathBuf,
        relationships: PathBuf,
    },
    Snapshot(PathBuf),
}

/// Service settings, read from a `key = value` file. Relative paths are
/// resolved against the file's directory.
///
/// Keys: `listen`, `graph` (snapshot) or `concepts` + `descriptions` +
/// `relationships`, `concept_index`, `dictionary`, `search_index`, `corpus`,
/// `languages`, `default_mode`, `w_c`, `top_n`, `embedder`, `embed_dim`,
/// `embed_url`, `embed_timeout_secs`, `cors_origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub graph: GraphSource,
    /// Built in memory from the graph when absent.
    pub concept_index: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    /// An index written by `medct index`.
    pub search_index: Option<PathBuf>,
    /// A corpus JSONL, tagged (where needed) and indexed at load time.
    pub corpus: Option<PathBuf>,
    pub languages: LanguageFilter,
    pub default_mode: SearchMode,
    pub w_c: f64,
    pub top_n: usize,
    pub embedder: EmbedderConfig,
    pub cors_origin: Option<String>,
}

impl ServiceConfig {
    pub fn new(graph: GraphSource) -> Self {
        ServiceConfig {
            listen: ([127, 0, 0, 1], 8080).into(),
            graph,
            concept_index: None,
            dictionary: None,
            search_index: None,
            corpus: None,
            languages: LanguageFilter::All,
            default_mode: SearchMode::ConceptFilter,
            w_c: DEFAULT_CONCEPT_WEIGHT,
            top_n: 10,
            embedder: EmbedderConfig::default(),
            cors_origin: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// The file named by `MEDCT_CONFIG`, if set.
    pub fn from_env() -> Option<PathBuf> {
        std::env::var_os(CONFIG_ENV).map(PathBuf::from)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let bad = |line: usize, msg: String| Error::Config(format!("line {line}: {msg}"));
        let mut listen = None;
        let mut snapshot = None;
        let (mut concepts, mut descriptions, mut relationships) = (None, None, None);
        let mut cfg = ServiceConfig::new(GraphSource::Snapshot(PathBuf::new()));
        let mut embed_kind = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(bad(line_no, format!("expected key = value, got `{line}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "listen" => {
                    listen = Some(
                        value
                            .parse()
                            .map_err(|e| bad(line_no, format!("listen: {e}")))?,
                    )
                }
                "graph" => snapshot = Some(resolve(value)),
                "concepts" => concepts = Some(resolve(value)),
                "descriptions" => descriptions = Some(resolve(value)),
                "relationships" => relationships = Some(resolve(value)),
                "concept_index" => cfg.concept_index = Some(resolve(value)),
                "dictionary" => cfg.dictionary = Some(resolve(value)),
                "search_index" => cfg.search_index = Some(resolve(value)),
                "corpus" => cfg.corpus = Some(resolve(value)),
                "languages" => cfg.languages = LanguageFilter::parse(value),
                "default_mode" => {
                    cfg.default_mode = value.parse().map_err(|e| bad(line_no, format!("{e}")))?
                }
                "w_c" => {
                    cfg.w_c = value
                        .parse::<f64>()
                        .ok()
                        .filter(|w| w.is_finite() && *w >= 0.0)
                        .ok_or_else(|| bad(line_no, format!("w_c must be a non-negative number, got `{value}`")))?
                }
                "top_n" => {
                    cfg.top_n = value
                        .parse::<usize>()
                        .ok()
                        .filter(|n| *n >= 1)
                        .ok_or_else(|| bad(line_no, format!("top_n must be a positive integer, got `{value}`")))?
                }
                "embedder" => {
                    embed_kind = Some(match value {
                        "builtin" => EmbedderKind::Builtin,
                        "remote" => EmbedderKind::Remote,
                        other => return Err(bad(line_no, format!("unknown embedder `{other}`"))),
                    })
                }
                "embed_dim" => {
                    cfg.embedder.dim = value
                        .parse()
                        .map_err(|_| bad(line_no, format!("embed_dim: `{value}`")))?
                }
                "embed_url" => cfg.embedder.remote_url = Some(value.to_string()),
                "embed_timeout_secs" => {
                    cfg.embedder.timeout = Duration::from_secs(
                        value
                            .parse()
                            .map_err(|_| bad(line_no, format!("embed_timeout_secs: `{value}`")))?,
                    )
                }
                "cors_origin" => cfg.cors_origin = Some(value.to_string()),
                other => return Err(bad(line_no, format!("unknown key `{other}`"))),
            }
        }
        if let Some(kind) = embed_kind {
            cfg.embedder.kind = kind;
        }
        if let Some(l) = listen {
            cfg.listen = l;
        }
        cfg.graph = match (snapshot, concepts, descriptions, relationships) {
            (Some(s), None, None, None) => GraphSource::Snapshot(s),
            (None, Some(c), Some(d), Some(r)) => GraphSource::Release {
                concepts: c,
                descriptions: d,
                relationships: r,
            },
            _ => {
                return Err(Error::Config(
                    "give either `graph` or all of `concepts`, `descriptions`, `relationships`".into(),
                ))
            }
        };
        cfg.embedder.validate()?;
        Ok(cfg)
    }
}
