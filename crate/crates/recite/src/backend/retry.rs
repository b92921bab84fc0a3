use std::time::Duration;

use async_trait::async_trait;
use rand::Rng;

use super::{Backend, BackendError, GenerationRequest, GenerationResult};

/// Exponential backoff with full jitter; only retryable errors are retried.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 5, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(30) }
    }
}

impl RetryPolicy {
    /// No sleeping between attempts; for tests.
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy { max_attempts, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    /// Delay before attempt `attempt + 1` (attempt is 1-based). A server
    /// supplied Retry-After wins over the computed backoff.
    pub fn delay(&self, attempt: u32, err: &BackendError) -> Duration {
        if let BackendError::RateLimited { retry_after_ms: Some(ms) } = err {
            return Duration::from_millis(*ms);
        }
        let exp = self.base_delay.saturating_mul(1u32 << (attempt - 1).min(16));
        let cap = exp.min(self.max_delay);
        if cap.is_zero() {
            return cap;
        }
        let jitter = rand::rng().random_range(0.5..=1.0);
        cap.mul_f64(jitter)
    }
}

pub struct RetryingBackend<B> {
    inner: B,
    policy: RetryPolicy,
}

impl<B: Backend> RetryingBackend<B> {
    pub fn new(inner: B, policy: RetryPolicy) -> Self {
        RetryingBackend { inner, policy }
    }
}

#[async_trait]
impl<B: Backend> Backend for RetryingBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        let mut attempt = 1;
        loop {
            match self.inner.generate(request).await {
                Err(e) if e.is_retryable() && attempt < self.policy.max_attempts => {
                    let wait = self.policy.delay(attempt, &e);
                    log::debug!("attempt {attempt} failed ({e}); retrying in {wait:?}");
                    tokio::time::sleep(wait).await;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptedBackend, ScriptedFailure};
    use recite_core::SamplingParams;
    use std::sync::Arc;

    fn req() -> GenerationRequest {
        GenerationRequest::new("P", SamplingParams::greedy(4))
    }

    #[tokio::test]
    async fn recovers_within_budget() {
        let s = Arc::new(ScriptedBackend::new().respond("P", ["ok"]).fail("P", ScriptedFailure::RateLimited, Some(4)));
        let b = RetryingBackend::new(s.clone(), RetryPolicy::immediate(5));
        assert_eq!(b.generate(&req()).await.unwrap().texts, vec!["ok"]);
        assert_eq!(s.calls(), 5);
    }

    #[tokio::test]
    async fn gives_up_after_max_attempts() {
        let s = Arc::new(ScriptedBackend::new().respond("P", ["ok"]).fail("P", ScriptedFailure::Timeout, Some(5)));
        let b = RetryingBackend::new(s.clone(), RetryPolicy::immediate(5));
        assert_eq!(b.generate(&req()).await, Err(BackendError::Timeout));
        assert_eq!(s.calls(), 5);
    }

    #[tokio::test]
    async fn fatal_errors_are_not_retried() {
        let s = Arc::new(ScriptedBackend::new().respond("P", ["ok"]).fail("P", ScriptedFailure::Malformed, None));
        let b = RetryingBackend::new(s.clone(), RetryPolicy::immediate(5));
        assert!(matches!(b.generate(&req()).await, Err(BackendError::MalformedResponse(_))));
        assert_eq!(s.calls(), 1);
    }

    #[test]
    fn backoff_grows_and_is_capped() {
        let p = RetryPolicy { max_attempts: 5, base_delay: Duration::from_millis(100), max_delay: Duration::from_millis(350) };
        let t = BackendError::Timeout;
        assert!(p.delay(1, &t) <= Duration::from_millis(100));
        assert!(p.delay(2, &t) >= Duration::from_millis(100));
        assert!(p.delay(4, &t) <= Duration::from_millis(350));
        let ra = BackendError::RateLimited { retry_after_ms: Some(1200) };
        assert_eq!(p.delay(1, &ra), Duration::from_millis(1200));
    }
}
