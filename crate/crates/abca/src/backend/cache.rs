//! Content-addressed on-disk cache of completions.
//!
//! The key is the hex SHA-256 of `abca-cache-v1\n` followed by the request
//! serialized as JSON with object keys sorted and CRLF folded to LF. Each
//! entry is one file `<key>.json` written through a temporary file and a
//! rename, so readers never see a partial entry.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use abca_core::{BackendError, ChatBackend, Completion, CompletionRequest, Provenance};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{Limiter, DEFAULT_MAX_IN_FLIGHT};

pub const CACHE_KEY_PREFIX: &str = "abca-cache-v1\n";

/// Canonical JSON text of a request.
pub fn canonical_request(req: &CompletionRequest) -> String {
    let v = serde_json::to_value(req).expect("requests always serialize");
    let mut out = String::new();
    write_sorted(&v, &mut out);
    out
}

fn write_sorted(v: &Value, out: &mut String) {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_sorted(&Value::String(k.clone()), out);
                out.push(':');
                write_sorted(&m[k], out);
            }
            out.push('}');
        }
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_sorted(x, out);
            }
            out.push(']');
        }
        Value::String(s) => out.push_str(&Value::String(s.replace("\r\n", "\n")).to_string()),
        other => out.push_str(&other.to_string()),
    }
}

pub fn cache_key(req: &CompletionRequest) -> String {
    let mut h = Sha256::new();
    h.update(CACHE_KEY_PREFIX.as_bytes());
    h.update(canonical_request(req).as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    /// Seconds since the Unix epoch; informational, not part of the key.
    pub created_at: u64,
    pub request: CompletionRequest,
    pub completion: Completion,
}

/// Wraps a backend with the on-disk cache. Only successful completions are
/// stored. Concurrent misses on one key make a single inner call.
pub struct CachedBackend<B> {
    inner: B,
    dir: PathBuf,
    bypass: bool,
    live_calls: AtomicU64,
    hits: AtomicU64,
    flights: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    limiter: Limiter,
}

impl<B: ChatBackend> CachedBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            inner,
            dir,
            bypass: false,
            live_calls: AtomicU64::new(0),
            hits: AtomicU64::new(0),
            flights: Mutex::new(HashMap::new()),
            limiter: Limiter::new(DEFAULT_MAX_IN_FLIGHT),
        })
    }

    /// Skip lookups; fresh results still overwrite the stored entries.
    pub fn with_bypass(mut self, bypass: bool) -> Self {
        self.bypass = bypass;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.limiter = Limiter::new(n);
        self
    }

    /// Calls forwarded to the wrapped backend.
    pub fn live_calls(&self) -> u64 {
        self.live_calls.load(Ordering::SeqCst)
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn lookup(&self, key: &str) -> Option<Completion> {
        let bytes = std::fs::read(self.entry_path(key)).ok()?;
        let entry: CacheEntry = serde_json::from_slice(&bytes).ok()?;
        (entry.key == key).then_some(entry.completion)
    }

    fn store(&self, key: &str, req: &CompletionRequest, c: &Completion) -> std::io::Result<()> {
        let created_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let entry = CacheEntry { key: key.to_string(), created_at, request: req.clone(), completion: c.clone() };
        let bytes = serde_json::to_vec_pretty(&entry).map_err(std::io::Error::other)?;
        let tmp = self.dir.join(format!(".{key}.{}.tmp", std::process::id()));
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, self.entry_path(key))
    }

    fn hit(&self, mut c: Completion) -> Completion {
        self.hits.fetch_add(1, Ordering::SeqCst);
        c.provenance = Provenance::Cache;
        c
    }
}

impl<B: ChatBackend> ChatBackend for CachedBackend<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        req.validate()?;
        let key = cache_key(req);
        if !self.bypass {
            if let Some(c) = self.lookup(&key) {
                return Ok(self.hit(c));
            }
        }
        let flight = {
            let mut f = self.flights.lock().unwrap_or_else(|p| p.into_inner());
            f.entry(key.clone()).or_default().clone()
        };
        let result = {
            let _guard = flight.lock().unwrap_or_else(|p| p.into_inner());
            match (!self.bypass).then(|| self.lookup(&key)).flatten() {
                Some(c) => Ok(self.hit(c)),
                None => {
                    let _permit = self.limiter.acquire();
                    self.live_calls.fetch_add(1, Ordering::SeqCst);
                    let c = self.inner.complete(req)?;
                    self.store(&key, req, &c)
                        .map_err(|e| BackendError::Transport(format!("cache write failed: {e}")))?;
                    Ok(c)
                }
            }
        };
        let mut f = self.flights.lock().unwrap_or_else(|p| p.into_inner());
        if Arc::strong_count(&flight) == 2 {
            f.remove(&key);
        }
        result
    }

    fn model_id(&self) -> String {
        self.inner.model_id()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use abca_core::{Message, Usage};

    struct Slow(AtomicU64);

    impl ChatBackend for Slow {
        fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(20));
            Ok(Completion {
                text: req.rendered_prompt(),
                tokens: None,
                usage: Usage::default(),
                provenance: Provenance::Live,
            })
        }

        fn model_id(&self) -> String {
            "slow".into()
        }
    }

    #[test]
    fn canonical_text_sorts_and_folds_crlf() {
        let r = CompletionRequest::new("m", vec![Message::user("a\r\nb")]);
        let c = canonical_request(&r);
        assert_eq!(
            c,
            r#"{"max_tokens":1024,"messages":[{"content":"a\nb","role":"user"}],"model_id":"m","temperature":0.0,"want_logprobs":false}"#
        );
        let mut lf = r.clone();
        lf.messages[0].content = "a\nb".into();
        assert_eq!(cache_key(&r), cache_key(&lf));
        let mut other = lf.clone();
        other.sample_slot = Some(1);
        assert_ne!(cache_key(&lf), cache_key(&other));
        let (mut a, mut b) = (lf.clone(), lf.clone());
        a.temperature = 0.7;
        b.temperature = 0.8;
        assert_ne!(cache_key(&a), cache_key(&b));
    }

    #[test]
    fn key_ignores_field_order() {
        let x: CompletionRequest = serde_json::from_str(
            r#"{"model_id":"m","messages":[{"role":"user","content":"q"}],"temperature":0.5,"max_tokens":9,"want_logprobs":true}"#,
        )
        .unwrap();
        let y: CompletionRequest = serde_json::from_str(
            r#"{"want_logprobs":true,"max_tokens":9,"temperature":0.5,"messages":[{"content":"q","role":"user"}],"model_id":"m"}"#,
        )
        .unwrap();
        assert_eq!(cache_key(&x), cache_key(&y));
    }

    #[test]
    fn golden_digest() {
        let r = CompletionRequest::new("mock", vec![Message::user("Who is the bell-ringer of Notre Dame?")]);
        assert_eq!(cache_key(&r), "438ff0f8fc4eba089852d8dd42b3d8da2e6102919b1a7e3b4cd376557701f77d");
    }

    #[test]
    fn single_flight_and_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let cb = CachedBackend::new(Slow(AtomicU64::new(0)), dir.path()).unwrap();
        let r = CompletionRequest::new("m", vec![Message::user("q")]);
        std::thread::scope(|s| {
            for _ in 0..6 {
                s.spawn(|| cb.complete(&r).unwrap());
            }
        });
        assert_eq!(cb.live_calls(), 1);
        assert_eq!(cb.inner.0.load(Ordering::SeqCst), 1);
        let again = cb.complete(&r).unwrap();
        assert_eq!(again.provenance, Provenance::Cache);
        assert_eq!(again.text, "q");
        assert_eq!(cb.live_calls(), 1);

        let bypass = CachedBackend::new(Slow(AtomicU64::new(0)), dir.path()).unwrap().with_bypass(true);
        assert_eq!(bypass.complete(&r).unwrap().provenance, Provenance::Live);
        assert_eq!(bypass.live_calls(), 1);
    }
}
