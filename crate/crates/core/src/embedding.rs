//! Text embeddings behind one provider contract.
//!
//! [`BuiltinEmbedder`] hashes character n-grams into a fixed number of
//! buckets and needs nothing external; it is what the tests use. For real
//! models, [`RemoteEmbedder`] speaks a small HTTP protocol:
//!
//! ```text
//! POST {remote_url}/embed  {"texts": ["...", ...]}
//!   -> 200 {"vectors": [[f64, ...], ...]}
//! ```
//!
//! The `MEDCT_EMBED_URL` environment variable overrides the configured URL.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DIM: usize = 512;
pub const EMBED_URL_ENV: &str = "MEDCT_EMBED_URL";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding service unreachable: {0}")]
    Transport(String),
    #[error("embedding service protocol error: {0}")]
    Protocol(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("non-finite embedding value")]
    NonFinite,
    #[error("embedder configuration: {0}")]
    Config(String),
}

/// A dense vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(EmbeddingVector(values))
        } else {
            Err(EmbeddingError::NonFinite)
        }
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        EmbeddingVector(self.0.iter().map(|v| v * c).collect())
    }

    /// Element-wise arithmetic mean. `None` for an empty input.
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a EmbeddingVector>) -> Option<Self> {
        let mut iter = vectors.into_iter();
        let mut sum = iter.next()?.0.clone();
        let mut n = 1usize;
        for v in iter {
            for (s, x) in sum.iter_mut().zip(&v.0) {
                *s += x;
            }
            n += 1;
        }
        let n = n as f64;
        sum.iter_mut().for_each(|s| *s /= n);
        Some(EmbeddingVector(sum))
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbeddingError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        EmbeddingVector::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimMismatch(a.dim(), b.dim()));
    }
    Ok(cosine_with_norms(a, a.norm(), b, b.norm()))
}

pub(crate) fn cosine_with_norms(a: &EmbeddingVector, na: f64, b: &EmbeddingVector, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (na * nb)).clamp(-1.0, 1.0)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Counts every character n-gram (for each size in `ngram_sizes`) into
/// bucket `fnv1a64(utf8(ngram)) % dim`, then L2-normalizes. Text with no
/// n-grams yields the zero vector.
pub fn builtin_hash_embed(text: &str, dim: usize, ngram_sizes: &[usize]) -> EmbeddingVector {
    let mut buckets = vec![0.0; dim];
    if dim == 0 {
        return EmbeddingVector(buckets);
    }
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let chars = bounds.len() - 1;
    for &n in ngram_sizes {
        if n == 0 || n > chars {
            continue;
        }
        for start in 0..=chars - n {
            let gram = &text[bounds[start]..bounds[start + n]];
            buckets[(fnv1a64(gram.as_bytes()) % dim as u64) as usize] += 1.0;
        }
    }
    let norm = buckets.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        buckets.iter_mut().for_each(|v| *v /= norm);
    }
    EmbeddingVector(buckets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Builtin,
    Remote,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    pub remote_url: Option<String>,
    pub ngram_sizes: Vec<usize>,
    pub timeout: Duration,
    /// Maximum concurrent requests to the remote service.
    pub parallelism: usize,
    /// Texts per remote request.
    pub batch_size: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Builtin,
            dim: DEFAULT_DIM,
            remote_url: None,
            ngram_sizes: vec![1, 2, 3],
            timeout: Duration::from_secs(30),
            parallelism: 4,
            batch_size: 64,
        }
    }
}

impl EmbedderConfig {
    pub fn builtin(dim: usize) -> Self {
        EmbedderConfig {
            dim,
            ..Default::default()
        }
    }

    pub fn remote(url: impl Into<String>, dim: usize) -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Remote,
            dim,
            remote_url: Some(url.into()),
            ..Default::default()
        }
    }

    /// The URL actually used: the environment override, else the config.
    pub fn effective_url(&self) -> Option<String> {
        std::env::var(EMBED_URL_ENV)
            .ok()
            .filter(|u| !u.is_empty())
            .or_else(|| self.remote_url.clone())
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dim == 0 {
            return Err(EmbeddingError::Config("dim must be positive".into()));
        }
        match self.kind {
            EmbedderKind::Builtin if self.ngram_sizes.iter().all(|&n| n == 0) => Err(
                EmbeddingError::Config("builtin embedder needs at least one n-gram size".into()),
            ),
            EmbedderKind::Remote if self.effective_url().is_none() => Err(EmbeddingError::Config(
                "remote embedder requires remote_url".into(),
            )),
            _ if self.parallelism == 0 || self.batch_size == 0 => Err(EmbeddingError::Config(
                "parallelism and batch_size must be positive".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Builds the provider this configuration describes.
    pub fn connect(&self) -> Result<Box<dyn Embedder>, EmbeddingError> {
        self.validate()?;
        Ok(match self.kind {
            EmbedderKind::Builtin => Box::new(BuiltinEmbedder::new(self.dim, self.ngram_sizes.clone())),
            EmbedderKind::Remote => Box::new(RemoteEmbedder::new(
                self.effective_url().expect("validated"),
                self.dim,
                self.timeout,
                self.parallelism,
                self.batch_size,
            )?),
        })
    }
}

/// A text embedding provider. Implementations must be deterministic for a
/// given fingerprint.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    /// Identifies the model and its settings; indexes built with one
    /// fingerprint can only be queried with the same one.
    fn fingerprint(&self) -> String;

    /// One vector per input, in order.
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError>;
}

#[derive(Debug, Clone)]
pub struct BuiltinEmbedder {
    dim: usize,
    ngram_sizes: Vec<usize>,
}

impl BuiltinEmbedder {
    pub fn new(dim: usize, ngram_sizes: Vec<usize>) -> Self {
        BuiltinEmbedder { dim, ngram_sizes }
    }
}

impl Embedder for BuiltinEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        let sizes: Vec<String> = self.ngram_sizes.iter().map(|n| n.to_string()).collect();
        format!("builtin-fnv1a;dim={};ngrams={}", self.dim, sizes.join(","))
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        Ok(texts
            .iter()
            .map(|t| builtin_hash_embed(t, self.dim, &self.ngram_sizes))
            .collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for the remote embedding protocol. Batches are sent concurrently,
/// at most `parallelism` at a time.
pub struct RemoteEmbedder {
    url: String,
    dim: usize,
    parallelism: usize,
    batch_size: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(
        url: String,
        dim: usize,
        timeout: Duration,
        parallelism: usize,
        batch_size: usize,
    ) -> Result<Self, EmbeddingError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbeddingError::Config(e.to_string()))?;
        Ok(RemoteEmbedder {
            url: url.trim_end_matches('/').to_string(),
            dim,
            parallelism: parallelism.max(1),
            batch_size: batch_size.max(1),
            client,
        })
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let resp = self
            .client
            .post(format!("{}/embed", self.url))
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| EmbeddingError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(EmbeddingError::Protocol(format!("status {}", resp.status())));
        }
        let body: EmbedResponse = resp
            .json()
            .map_err(|e| EmbeddingError::Protocol(format!("bad response body: {e}")))?;
        if body.vectors.len() != texts.len() {
            return Err(EmbeddingError::Protocol(format!(
                "expected {} vectors, got {}",
                texts.len(),
                body.vectors.len()
            )));
        }
        body.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(EmbeddingError::Protocol(format!(
                        "expected dimension {}, got {}",
                        self.dim,
                        v.len()
                    )));
                }
                EmbeddingVector::new(v)
                    .map_err(|_| EmbeddingError::Protocol("non-finite vector entry".into()))
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("remote;dim={};url={}", self.dim, self.url)
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let batches: Vec<&[&str]> = texts.chunks(self.batch_size).collect();
        let mut results: Vec<Option<Result<Vec<EmbeddingVector>, EmbeddingError>>> =
            (0..batches.len()).map(|_| None).collect();
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots = std::sync::Mutex::new(&mut results);
        std::thread::scope(|scope| {
            for _ in 0..self.parallelism.min(batches.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    let Some(batch) = batches.get(i) else { break };
                    let out = self.embed_batch(batch);
                    slots.lock().expect("result slots")[i] = Some(out);
                });
            }
        });
        let mut vectors = Vec::with_capacity(texts.len());
        for r in results {
            vectors.extend(r.expect("every batch ran")?);
        }
        Ok(vectors)
    }
}

/// Embeds `texts` with the provider described by `config`.
pub fn embed_texts(
    config: &EmbedderConfig,
    texts: &[&str],
) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    config.connect()?.embed(texts)
}
