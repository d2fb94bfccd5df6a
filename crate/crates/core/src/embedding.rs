//! Sentence embedding providers and cosine similarity.
//!
//! Two providers ship with the crate: [`FallbackEmbedder`], a deterministic
//! feature-hashing embedder that needs no model or network, and
//! [`RemoteEmbedder`], a client for an HTTP service speaking
//!
//! ```text
//! POST /embed  {"texts": ["...", ...]}  ->  {"dim": D, "vectors": [[...], ...]}
//! ```
//!
//! Remote results are cached on disk so a full-corpus extraction can resume.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::Real;
use crate::text::tokenize;

pub const FALLBACK_DIM: usize = 256;
pub const MAX_BATCH: usize = 256;
pub const REMOTE_ATTEMPTS: u32 = 3;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding service unavailable after {attempts} attempts: {last}")]
    RemoteUnavailable { attempts: u32, last: String },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("embedding service returned an invalid response: {0}")]
    InvalidResponse(String),
    #[error("embedding cache {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Cosine of two equal-length vectors; 0 when either has zero norm.
pub fn cosine<T: Real>(u: &[T], v: &[T]) -> Result<T, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::LengthMismatch(u.len(), v.len()));
    }
    let mut dot = T::zero();
    let mut nu = T::zero();
    let mut nv = T::zero();
    for (&a, &b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == T::zero() || nv == T::zero() {
        return Ok(T::zero());
    }
    let c = dot / (nu.sqrt() * nv.sqrt());
    Ok(c.max(-T::one()).min(T::one()))
}

pub trait Embedder: Send + Sync {
    /// Stable identifier used to key caches.
    fn id(&self) -> String;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn id(&self) -> String {
        (**self).id()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

/// `cosine(embed(text1), embed(text2))`.
pub fn semantic_similarity<T: Real, E: Embedder + ?Sized>(
    provider: &E,
    text1: &str,
    text2: &str,
) -> Result<T, EmbedError> {
    let a = provider.embed(text1)?;
    let b = provider.embed(text2)?;
    cosine(&a.values, &b.values).map(T::lit)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of stemmed tokens, L2-normalized.
///
/// Bucket is `fnv1a64(token) % dim`, sign is the hash's top bit.
#[derive(Debug, Clone)]
pub struct FallbackEmbedder {
    dim: usize,
}

impl Default for FallbackEmbedder {
    fn default() -> Self {
        FallbackEmbedder { dim: FALLBACK_DIM }
    }
}

impl FallbackEmbedder {
    pub fn with_dim(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        FallbackEmbedder { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bucket(&self, token: &str) -> (usize, f64) {
        let h = fnv1a64(token.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        ((h % self.dim as u64) as usize, sign)
    }
}

impl Embedder for FallbackEmbedder {
    fn id(&self) -> String {
        format!("fallback-hash-{}", self.dim)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut values = vec![0.0; self.dim];
        for token in tokenize(text).tokens() {
            let (b, s) = self.bucket(token);
            values[b] += s;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(EmbeddingVector { values })
    }
}

/// Precomputed vectors with a delegate for misses.
pub struct EmbeddingTable<E> {
    table: HashMap<String, EmbeddingVector>,
    inner: E,
}

impl<E: Embedder> EmbeddingTable<E> {
    /// Embeds every distinct text through `inner` in batches.
    pub fn precompute<'a, I>(inner: E, texts: I) -> Result<Self, EmbedError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut distinct: Vec<&str> = texts.into_iter().collect();
        distinct.sort_unstable();
        distinct.dedup();
        let mut table = HashMap::with_capacity(distinct.len());
        for chunk in distinct.chunks(MAX_BATCH) {
            let vecs = inner.embed_batch(chunk)?;
            for (t, v) in chunk.iter().zip(vecs) {
                table.insert(t.to_string(), v);
            }
        }
        Ok(EmbeddingTable { table, inner })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl<E: Embedder> Embedder for EmbeddingTable<E> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        match self.table.get(text) {
            Some(v) => Ok(v.clone()),
            None => self.inner.embed(text),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheLine {
    k: String,
    v: Vec<f64>,
}

/// Append-only JSON-lines cache keyed by the SHA-256 of the text, one file per provider id.
pub struct EmbeddingCache {
    path: PathBuf,
    state: Mutex<(HashMap<String, Vec<f64>>, File)>,
}

impl EmbeddingCache {
    pub fn open(dir: &Path, provider_id: &str) -> Result<Self, EmbedError> {
        let io = |source| EmbedError::Cache {
            path: dir.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;
        let tag = hex::encode(&Sha256::digest(provider_id.as_bytes())[..8]);
        let path = dir.join(format!("embeddings-{tag}.jsonl"));
        let mut map = HashMap::new();
        if path.exists() {
            let f = File::open(&path).map_err(io)?;
            for line in BufReader::new(f).lines() {
                let line = line.map_err(io)?;
                // A torn final line from an interrupted run is skipped.
                if let Ok(entry) = serde_json::from_str::<CacheLine>(&line) {
                    map.insert(entry.k, entry.v);
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        Ok(EmbeddingCache {
            path,
            state: Mutex::new((map, file)),
        })
    }

    pub fn key(text: &str) -> String {
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn get(&self, text: &str) -> Option<Vec<f64>> {
        let state = self.state.lock().expect("cache lock");
        state.0.get(&Self::key(text)).cloned()
    }

    pub fn put(&self, text: &str, vector: &[f64]) -> Result<(), EmbedError> {
        let key = Self::key(text);
        let mut state = self.state.lock().expect("cache lock");
        if state.0.contains_key(&key) {
            return Ok(());
        }
        let line = serde_json::to_string(&CacheLine {
            k: key.clone(),
            v: vector.to_vec(),
        })
        .expect("finite floats serialize");
        writeln!(state.1, "{line}").map_err(|source| EmbedError::Cache {
            path: self.path.clone(),
            source,
        })?;
        state.0.insert(key, vector.to_vec());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("cache lock").0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Base URL; requests go to `<endpoint>/embed`.
    pub endpoint: String,
    pub timeout_secs: f64,
    pub cache_dir: Option<PathBuf>,
    /// First retry delay; doubles per attempt.
    pub backoff_ms: u64,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            timeout_secs: 30.0,
            cache_dir: None,
            backoff_ms: 250,
        }
    }
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig::new("http://127.0.0.1:8000")
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

enum Attempt {
    Retry(String),
    Fatal(EmbedError),
}

pub struct RemoteEmbedder {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    dim: OnceLock<usize>,
    cache: Option<EmbeddingCache>,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteConfig) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| EmbedError::RemoteUnavailable {
                attempts: 0,
                last: e.to_string(),
            })?;
        let id = format!("remote:{}", config.endpoint);
        let cache = match &config.cache_dir {
            Some(dir) => Some(EmbeddingCache::open(dir, &id)?),
            None => None,
        };
        Ok(RemoteEmbedder {
            config,
            client,
            dim: OnceLock::new(),
            cache,
        })
    }

    /// Dimension learned from the first response, if any.
    pub fn dim(&self) -> Option<usize> {
        self.dim.get().copied()
    }

    fn url(&self) -> String {
        format!("{}/embed", self.config.endpoint.trim_end_matches('/'))
    }

    fn check_dim(&self, got: usize) -> Result<(), EmbedError> {
        let expected = *self.dim.get_or_init(|| got);
        if expected != got {
            return Err(EmbedError::DimensionMismatch { expected, got });
        }
        Ok(())
    }

    fn attempt(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, Attempt> {
        let resp = self
            .client
            .post(self.url())
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if status != reqwest::StatusCode::OK {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        let body: EmbedResponse = resp
            .json()
            .map_err(|e| Attempt::Retry(format!("bad body: {e}")))?;
        if body.vectors.len() != texts.len() {
            return Err(Attempt::Fatal(EmbedError::InvalidResponse(format!(
                "{} vectors for {} texts",
                body.vectors.len(),
                texts.len()
            ))));
        }
        self.check_dim(body.dim).map_err(Attempt::Fatal)?;
        for v in &body.vectors {
            if v.len() != body.dim {
                return Err(Attempt::Fatal(EmbedError::DimensionMismatch {
                    expected: body.dim,
                    got: v.len(),
                }));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Attempt::Fatal(EmbedError::InvalidResponse(
                    "non-finite component".into(),
                )));
            }
        }
        Ok(body.vectors)
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut last = String::new();
        for attempt in 0..REMOTE_ATTEMPTS {
            if attempt > 0 {
                let delay = self.config.backoff_ms << (attempt - 1);
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(texts) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("embedding request attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(EmbedError::RemoteUnavailable {
            attempts: REMOTE_ATTEMPTS,
            last,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}", self.config.endpoint)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed_batch(&[text])?;
        Ok(out.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut out: Vec<Option<Vec<f64>>> = texts
            .iter()
            .map(|t| self.cache.as_ref().and_then(|c| c.get(t)))
            .collect();
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        for chunk in missing.chunks(MAX_BATCH) {
            let batch: Vec<&str> = chunk.iter().map(|&i| texts[i]).collect();
            let vectors = self.request(&batch)?;
            for (&i, v) in chunk.iter().zip(vectors) {
                if let Some(cache) = &self.cache {
                    cache.put(texts[i], &v)?;
                }
                out[i] = Some(v);
            }
        }
        out.into_iter()
            .map(|v| {
                let values = v.expect("every slot filled");
                self.check_dim(values.len())?;
                Ok(EmbeddingVector { values })
            })
            .collect()
    }
}
