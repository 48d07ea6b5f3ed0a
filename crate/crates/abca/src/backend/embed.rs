//! Sentence embedders and the null-consensus embedding cache.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;
use std::time::Duration;

use abca_core::policy::null_embedding;
use abca_core::vector::{normalize, DEFAULT_EMBEDDING_DIM};
use abca_core::{BackendError, Embedder, UnitVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::http::{post_json, ENV_API_BASE, ENV_API_KEY};
use super::{Limiter, RetryPolicy, DEFAULT_MAX_IN_FLIGHT};

pub const ENV_EMBED_BASE: &str = "ABCA_EMBED_BASE";
pub const ENV_EMBED_MODEL: &str = "ABCA_EMBED_MODEL";
pub const DEFAULT_EMBED_MODEL: &str = "all-MiniLM-L6-v2";

/// Lowercases, collapses whitespace and strips trailing sentence punctuation.
pub fn embedding_key(text: &str) -> String {
    let joined = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    joined.trim_end_matches(['.', '!', '?', ',', ';', ':']).trim_end().to_string()
}

/// Deterministic embedder: each distinct key gets an isotropic Gaussian
/// direction seeded from SHA-256 of the seed and the key. Texts with the same
/// key, or aliased to the same key, embed identically; distinct keys are
/// nearly orthogonal at the default dimension.
pub struct MockEmbedder {
    seed: u64,
    dim: usize,
    aliases: BTreeMap<String, String>,
}

impl MockEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        Self { seed, dim: dim.max(1), aliases: BTreeMap::new() }
    }

    pub fn with_aliases(mut self, aliases: &BTreeMap<String, String>) -> Self {
        self.aliases = aliases.iter().map(|(k, v)| (embedding_key(k), embedding_key(v))).collect();
        self
    }

    pub fn vector(&self, text: &str) -> UnitVector {
        let mut key = embedding_key(text);
        if let Some(canon) = self.aliases.get(&key) {
            key = canon.clone();
        }
        let mut h = Sha256::new();
        h.update(b"abca-mock-embed-v1\n");
        h.update(self.seed.to_le_bytes());
        h.update(key.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        loop {
            let raw: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            if let Ok(v) = normalize(&raw) {
                return v;
            }
        }
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(0, DEFAULT_EMBEDDING_DIM)
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<UnitVector>, BackendError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn identity(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.aliases {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
            h.update([0]);
        }
        format!("mock:{}:{}:{}", self.seed, self.dim, &hex::encode(h.finalize())[..12])
    }
}

/// OpenAI-compatible `/embeddings` client.
pub struct HttpEmbedder {
    base_url: String,
    api_key: Option<String>,
    model: String,
    dim: usize,
    agent: ureq::Agent,
    retry: RetryPolicy,
    limiter: Limiter,
}

impl HttpEmbedder {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, model: impl Into<String>, dim: usize) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            model: model.into(),
            dim,
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
            retry: RetryPolicy::default(),
            limiter: Limiter::new(DEFAULT_MAX_IN_FLIGHT),
        }
    }

    /// Reads `ABCA_EMBED_BASE` (falling back to `ABCA_API_BASE`),
    /// `ABCA_API_KEY` and `ABCA_EMBED_MODEL`.
    pub fn from_env(dim: usize) -> Result<Self, BackendError> {
        let base = std::env::var(ENV_EMBED_BASE)
            .or_else(|_| std::env::var(ENV_API_BASE))
            .map_err(|_| BackendError::InvalidRequest(format!("{ENV_EMBED_BASE} is not set")))?;
        let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        let model = std::env::var(ENV_EMBED_MODEL).unwrap_or_else(|_| DEFAULT_EMBED_MODEL.into());
        Ok(Self::new(base, key, model, dim))
    }
}

pub fn parse_embeddings(v: &Value, expected: usize, dim: usize) -> Result<Vec<UnitVector>, BackendError> {
    let data = v
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::ProviderError("embedding response has no data".into()))?;
    if data.len() != expected {
        return Err(BackendError::ProviderError(format!("expected {expected} embeddings, got {}", data.len())));
    }
    let mut rows: Vec<(u64, Vec<f64>)> = Vec::with_capacity(data.len());
    for (i, d) in data.iter().enumerate() {
        let idx = d.get("index").and_then(Value::as_u64).unwrap_or(i as u64);
        let raw: Option<Vec<f64>> =
            d.get("embedding").and_then(Value::as_array).map(|a| a.iter().filter_map(Value::as_f64).collect());
        match raw {
            Some(r) if r.len() == dim => rows.push((idx, r)),
            Some(r) => {
                return Err(BackendError::ProviderError(format!("embedding has {} components, expected {dim}", r.len())))
            }
            None => return Err(BackendError::ProviderError("malformed embedding".into())),
        }
    }
    rows.sort_by_key(|r| r.0);
    rows.into_iter()
        .map(|(_, r)| normalize(&r).map_err(|e| BackendError::ProviderError(e.to_string())))
        .collect()
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<UnitVector>, BackendError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let _permit = self.limiter.acquire();
        let url = format!("{}/embeddings", self.base_url);
        let body = json!({"model": self.model, "input": texts});
        let v = self.retry.run(std::thread::sleep, || post_json(&self.agent, &url, self.api_key.as_deref(), &body))?;
        parse_embeddings(&v, texts.len(), self.dim)
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn identity(&self) -> String {
        format!("http:{}:{}:{}", self.base_url, self.model, self.dim)
    }
}

/// Null-consensus embeddings, computed once per embedder identity and phrase set.
#[derive(Default)]
pub struct NullEmbeddingCache {
    entries: Mutex<HashMap<(String, Vec<String>), UnitVector>>,
}

impl NullEmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, phrases: &[String], embedder: &dyn Embedder) -> abca_core::Result<UnitVector> {
        let key = (embedder.identity(), phrases.to_vec());
        if let Some(v) = self.entries.lock().unwrap_or_else(|p| p.into_inner()).get(&key) {
            return Ok(v.clone());
        }
        let v = null_embedding(phrases, embedder)?;
        self.entries.lock().unwrap_or_else(|p| p.into_inner()).insert(key, v.clone());
        Ok(v)
    }
}
