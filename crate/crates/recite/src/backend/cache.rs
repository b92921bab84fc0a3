use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, GenerationRequest, GenerationResult};
use crate::fingerprint::content_hash;
use crate::jsonl::{self, Appender};

/// Stable key over (backend id, prompt bytes, params, n_samples).
pub fn cache_key(backend_id: &str, request: &GenerationRequest) -> String {
    #[derive(Serialize)]
    struct KeyParts<'a> {
        backend: &'a str,
        request: &'a GenerationRequest,
    }
    content_hash(&KeyParts { backend: backend_id, request })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    texts: Vec<String>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

/// Append-only on-disk store. The first value written for a key wins; later
/// writes for the same key are ignored, so retries never produce divergent
/// entries.
pub struct CacheStore {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, CacheLine>>,
    writer: Mutex<Option<Appender>>,
}

impl CacheStore {
    /// In-memory only.
    pub fn memory() -> Self {
        CacheStore { path: None, entries: Mutex::new(HashMap::new()), writer: Mutex::new(None) }
    }

    /// Load an existing store (or start an empty one). Unreadable lines are
    /// skipped with a warning and their requests regenerate.
    pub fn open(path: &Path) -> Self {
        let mut entries = HashMap::new();
        match File::open(path) {
            Ok(f) => {
                for (i, line) in BufReader::new(f).lines().enumerate() {
                    let line = match line {
                        Ok(l) => l,
                        Err(e) => {
                            log::warn!("{}:{}: cache read stopped: {e}", path.display(), i + 1);
                            break;
                        }
                    };
                    if line.trim().is_empty() {
                        continue;
                    }
                    match jsonl::from_line::<CacheLine>(&line) {
                        Ok(c) => {
                            entries.entry(c.key.clone()).or_insert(c);
                        }
                        Err(e) => log::warn!("{}:{}: skipping corrupt cache entry: {e}", path.display(), i + 1),
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => log::warn!("{}: cache unreadable, starting empty: {e}", path.display()),
        }
        CacheStore { path: Some(path.to_path_buf()), entries: Mutex::new(entries), writer: Mutex::new(None) }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: &str, n_samples: u32) -> Option<CacheLine> {
        let entries = self.entries.lock().expect("poisoned");
        let hit = entries.get(key)?;
        if hit.texts.len() != n_samples as usize {
            log::warn!("cache entry {key} has {} texts, expected {n_samples}; regenerating", hit.texts.len());
            return None;
        }
        Some(hit.clone())
    }

    /// Returns the value now stored under `key` (the earlier one if present).
    fn put(&self, line: CacheLine) -> CacheLine {
        let mut entries = self.entries.lock().expect("poisoned");
        if let Some(existing) = entries.get(&line.key) {
            if existing.texts.len() == line.texts.len() {
                return existing.clone();
            }
        }
        entries.insert(line.key.clone(), line.clone());
        if let Some(path) = &self.path {
            let mut writer = self.writer.lock().expect("poisoned");
            if writer.is_none() {
                match Appender::open(path) {
                    Ok(a) => *writer = Some(a),
                    Err(e) => log::warn!("cache not persisted: {e}"),
                }
            }
            if let Some(w) = writer.as_mut() {
                if let Err(e) = w.append(&line) {
                    log::warn!("cache write failed: {e}");
                }
            }
        }
        line
    }
}

/// Wraps a backend with a transparent [`CacheStore`] lookup.
pub struct CachedBackend<B> {
    inner: B,
    store: Arc<CacheStore>,
}

impl<B: Backend> CachedBackend<B> {
    pub fn new(inner: B, store: Arc<CacheStore>) -> Self {
        CachedBackend { inner, store }
    }

    pub fn store(&self) -> &CacheStore {
        &self.store
    }
}

#[async_trait]
impl<B: Backend> Backend for CachedBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        request.check()?;
        let key = cache_key(self.inner.id(), request);
        if let Some(hit) = self.store.get(&key, request.n_samples) {
            return Ok(GenerationResult { texts: hit.texts, meta: hit.meta, cache_hit: true });
        }
        let fresh = self.inner.generate(request).await?;
        let stored = self.store.put(CacheLine { key, texts: fresh.texts, meta: fresh.meta });
        Ok(GenerationResult { texts: stored.texts, meta: stored.meta, cache_hit: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use recite_core::SamplingParams;

    fn req(seed: u64) -> GenerationRequest {
        GenerationRequest::new("P", SamplingParams::top_k(8, seed))
    }

    #[test]
    fn keys() {
        assert_eq!(cache_key("m", &req(1)), cache_key("m", &req(1)));
        assert_ne!(cache_key("m", &req(1)), cache_key("m", &req(2)));
        assert_ne!(cache_key("m", &req(1)), cache_key("n", &req(1)));
        assert_ne!(cache_key("m", &req(1)), cache_key("m", &req(1).with_samples(2)));
    }

    #[tokio::test]
    async fn hit_after_miss_and_persisted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let scripted = Arc::new(ScriptedBackend::new().respond("P", ["A", "B"]));
        let b = CachedBackend::new(scripted.clone(), Arc::new(CacheStore::open(&path)));
        let first = b.generate(&req(0)).await.unwrap();
        assert!(!first.cache_hit);
        let second = b.generate(&req(0)).await.unwrap();
        assert!(second.cache_hit);
        assert_eq!(first.texts, second.texts);
        assert_eq!(scripted.calls(), 1);

        let reopened = CachedBackend::new(scripted.clone(), Arc::new(CacheStore::open(&path)));
        assert!(reopened.generate(&req(0)).await.unwrap().cache_hit);
        assert_eq!(scripted.calls(), 1);
    }

    #[tokio::test]
    async fn corrupt_entries_regenerate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let key = cache_key("scripted", &req(0));
        std::fs::write(&path, format!("{{not json\n{{\"key\":\"{key}\",\"texts\":[]}}\n")).unwrap();
        let scripted = Arc::new(ScriptedBackend::new().respond("P", ["A"]));
        let b = CachedBackend::new(scripted.clone(), Arc::new(CacheStore::open(&path)));
        let out = b.generate(&req(0)).await.unwrap();
        assert_eq!(out.texts, vec!["A"]);
        assert!(!out.cache_hit);
        assert_eq!(scripted.calls(), 1);
    }

    #[test]
    fn first_writer_wins() {
        let store = CacheStore::memory();
        let line = |t: &str| CacheLine { key: "k".into(), texts: vec![t.into()], meta: BTreeMap::new() };
        assert_eq!(store.put(line("one")).texts, vec!["one"]);
        assert_eq!(store.put(line("two")).texts, vec!["one"]);
        assert_eq!(store.len(), 1);
    }
}
