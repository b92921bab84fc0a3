//! Text generation backends.
//!
//! [`Backend`] is the one interface the pipeline talks to. Implementations:
//! [`RemoteBackend`] (HTTP completions endpoint) and [`ScriptedBackend`]
//! (deterministic canned responses for tests). [`RetryingBackend`] and
//! [`CachedBackend`] wrap any backend; [`generate_batch`] fans requests out
//! with bounded concurrency.

mod batch;
mod cache;
mod remote;
mod retry;
mod scripted;

use std::collections::BTreeMap;

use async_trait::async_trait;
use recite_core::{SamplingParams, Validate};
use serde::{Deserialize, Serialize};

pub use batch::{generate_batch, BatchError, CancelFlag};
pub use cache::{cache_key, CacheStore, CachedBackend};
pub use remote::{RemoteBackend, RemoteConfig};
pub use retry::{RetryPolicy, RetryingBackend};
pub use scripted::{ScriptEntry, ScriptedBackend, ScriptedFailure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub params: SamplingParams,
    pub n_samples: u32,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, params: SamplingParams) -> Self {
        GenerationRequest { prompt: prompt.into(), params, n_samples: 1 }
    }

    pub fn with_samples(mut self, n: u32) -> Self {
        self.n_samples = n;
        self
    }

    pub fn check(&self) -> Result<(), BackendError> {
        if self.prompt.is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        if self.n_samples == 0 {
            return Err(BackendError::InvalidRequest("n_samples must be positive".into()));
        }
        if self.params.is_greedy() && self.n_samples != 1 {
            return Err(BackendError::InvalidRequest("greedy decoding takes exactly one sample".into()));
        }
        let v = self.params.violations();
        if !v.is_empty() {
            return Err(BackendError::InvalidRequest(v.join("; ")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    /// One completion per sample, already cut at the first stop sequence.
    pub texts: Vec<String>,
    pub meta: BTreeMap<String, String>,
    pub cache_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited")]
    RateLimited { retry_after_ms: Option<u64> },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no scripted response for prompt {prompt_hash} (prompt starts {excerpt:?})")]
    ScriptMiss { prompt_hash: String, excerpt: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
}

impl BackendError {
    /// Only timeouts and rate limits are worth retrying.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Timeout | BackendError::RateLimited { .. })
    }
}

#[async_trait]
pub trait Backend: Send + Sync {
    /// Stable identifier, part of every cache key.
    fn id(&self) -> &str;

    async fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError>;
}

#[async_trait]
impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        (**self).generate(request).await
    }
}

#[async_trait]
impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        (**self).generate(request).await
    }
}

/// Cut `text` at the earliest occurrence of any stop sequence.
pub fn truncate_at_stop(text: &str, stops: &[String]) -> String {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    text[..cut].to_string()
}

pub(crate) fn excerpt(prompt: &str) -> String {
    let tail: String = prompt.chars().take(80).collect();
    tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation() {
        let stops = vec!["\n\n".to_string()];
        assert_eq!(truncate_at_stop("Paris\n\nQuestion: next", &stops), "Paris");
        assert_eq!(truncate_at_stop("a|b#c", &["#".into(), "|".into()]), "a");
        assert_eq!(truncate_at_stop("abc", &[]), "abc");
    }

    #[test]
    fn greedy_takes_one_sample() {
        let r = GenerationRequest::new("p", SamplingParams::greedy(8)).with_samples(2);
        assert!(matches!(r.check(), Err(BackendError::InvalidRequest(_))));
        assert!(GenerationRequest::new("p", SamplingParams::top_k(8, 0)).with_samples(2).check().is_ok());
        assert!(GenerationRequest::new("", SamplingParams::greedy(8)).check().is_err());
    }
}
