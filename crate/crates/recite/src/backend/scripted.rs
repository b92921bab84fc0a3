use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{excerpt, truncate_at_stop, Backend, BackendError, GenerationRequest, GenerationResult};
use crate::fingerprint::prompt_hash;
use crate::jsonl::{self, JsonlError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedFailure {
    Timeout,
    RateLimited,
    Malformed,
}

impl ScriptedFailure {
    fn to_error(self) -> BackendError {
        match self {
            ScriptedFailure::Timeout => BackendError::Timeout,
            ScriptedFailure::RateLimited => BackendError::RateLimited { retry_after_ms: None },
            ScriptedFailure::Malformed => BackendError::MalformedResponse("scripted failure".into()),
        }
    }
}

/// One line of a script file.
///
/// Either `prompt_hash` (hex SHA-256 of the prompt bytes) or the literal
/// `prompt` identifies the entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default)]
    pub responses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ScriptedFailure>,
    /// Fail only the first `error_times` calls, then respond. Absent = always fail.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_times: Option<u32>,
}

impl ScriptEntry {
    fn key(&self) -> Option<String> {
        self.prompt_hash.clone().or_else(|| self.prompt.as_deref().map(prompt_hash))
    }
}

#[derive(Debug, Clone)]
struct Entry {
    responses: Vec<String>,
    error: Option<ScriptedFailure>,
    error_times: Option<u32>,
}

/// Deterministic backend for tests and offline runs.
///
/// Responses are looked up by prompt hash. Sample `i` of a greedy request
/// returns `responses[i]`; sample `i` of a sampled request returns
/// `responses[(seed + i) mod len]`. Output is therefore a pure function of
/// (prompt, seed, sample index).
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    entries: HashMap<String, Entry>,
    failures_served: Mutex<HashMap<String, u32>>,
    delay: Option<Duration>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<I: IntoIterator<Item = ScriptEntry>>(entries: I) -> Result<Self, BackendError> {
        let mut b = Self::new();
        for e in entries {
            let key = e.key().ok_or_else(|| {
                BackendError::InvalidRequest("script entry needs prompt_hash or prompt".into())
            })?;
            if e.responses.is_empty() && (e.error.is_none() || e.error_times.is_some()) {
                return Err(BackendError::InvalidRequest(format!("script entry {key} has no responses")));
            }
            b.entries.insert(key, Entry { responses: e.responses, error: e.error, error_times: e.error_times });
        }
        Ok(b)
    }

    pub fn from_file(path: &Path) -> Result<Self, ScriptLoadError> {
        let entries: Vec<ScriptEntry> = jsonl::read_all(path)?;
        Ok(Self::from_entries(entries)?)
    }

    /// Register the response queue for a literal prompt.
    pub fn respond<I, S>(mut self, prompt: &str, responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.insert(prompt, responses);
        self
    }

    pub fn insert<I, S>(&mut self, prompt: &str, responses: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let responses: Vec<String> = responses.into_iter().map(Into::into).collect();
        assert!(!responses.is_empty(), "scripted prompt needs at least one response");
        self.entries.insert(prompt_hash(prompt), Entry { responses, error: None, error_times: None });
    }

    /// Make a prompt fail, always (`times = None`) or for its first `times` calls.
    pub fn fail(mut self, prompt: &str, failure: ScriptedFailure, times: Option<u32>) -> Self {
        let entry = self
            .entries
            .entry(prompt_hash(prompt))
            .or_insert(Entry { responses: Vec::new(), error: None, error_times: None });
        entry.error = Some(failure);
        entry.error_times = times;
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Highest number of concurrently outstanding `generate` calls seen.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn respond_to(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        request.check()?;
        let hash = prompt_hash(&request.prompt);
        let entry = self
            .entries
            .get(&hash)
            .ok_or_else(|| BackendError::ScriptMiss { prompt_hash: hash.clone(), excerpt: excerpt(&request.prompt) })?;
        if let Some(kind) = entry.error {
            let mut served = self.failures_served.lock().expect("poisoned");
            let n = served.entry(hash.clone()).or_insert(0);
            if entry.error_times.is_none_or(|t| *n < t) {
                *n += 1;
                return Err(kind.to_error());
            }
        }
        let len = entry.responses.len() as u64;
        let base = if request.params.is_greedy() { 0 } else { request.params.seed };
        let texts = (0..u64::from(request.n_samples))
            .map(|i| {
                let pick = (base.wrapping_add(i) % len) as usize;
                truncate_at_stop(&entry.responses[pick], &request.params.stop_sequences)
            })
            .collect();
        let meta = BTreeMap::from([("model".to_string(), self.id().to_string())]);
        Ok(GenerationResult { texts, meta, cache_hit: false })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptLoadError {
    #[error(transparent)]
    Read(#[from] JsonlError),
    #[error(transparent)]
    Invalid(#[from] BackendError),
}

#[async_trait]
impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        if let Some(d) = self.delay {
            tokio::time::sleep(d).await;
        }
        let out = self.respond_to(request);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        out
    }
}
