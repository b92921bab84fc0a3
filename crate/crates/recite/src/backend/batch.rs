use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use futures::stream::{self, StreamExt};

use super::{Backend, BackendError, GenerationRequest, GenerationResult};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BatchError {
    #[error("max_in_flight must be at least 1")]
    InvalidBound,
    #[error("batch cancelled")]
    Cancelled,
}

/// Shared cancellation switch, checked before each request is dispatched.
#[derive(Debug, Clone, Default)]
pub struct CancelFlag(Arc<AtomicBool>);

impl CancelFlag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// Run requests with at most `max_in_flight` outstanding. Results line up
/// with `requests` by position; a failing request only fails its own slot.
pub async fn generate_batch<B: Backend + ?Sized>(
    backend: &B,
    requests: &[GenerationRequest],
    max_in_flight: usize,
    cancel: Option<&CancelFlag>,
) -> Result<Vec<Result<GenerationResult, BackendError>>, BatchError> {
    if max_in_flight == 0 {
        return Err(BatchError::InvalidBound);
    }
    let results: Vec<Option<Result<GenerationResult, BackendError>>> = stream::iter(requests)
        .map(|r| async move {
            if cancel.is_some_and(CancelFlag::is_cancelled) {
                return None;
            }
            Some(backend.generate(r).await)
        })
        .buffered(max_in_flight)
        .collect()
        .await;
    if cancel.is_some_and(CancelFlag::is_cancelled) || results.iter().any(Option::is_none) {
        return Err(BatchError::Cancelled);
    }
    Ok(results.into_iter().map(|r| r.expect("checked above")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptedBackend, ScriptedFailure};
    use recite_core::SamplingParams;
    use std::time::Duration;

    fn reqs(n: usize) -> Vec<GenerationRequest> {
        (0..n).map(|i| GenerationRequest::new(format!("p{i}"), SamplingParams::greedy(4))).collect()
    }

    fn backend(n: usize) -> ScriptedBackend {
        let mut b = ScriptedBackend::new().with_delay(Duration::from_millis(5));
        for i in 0..n {
            b.insert(&format!("p{i}"), [format!("r{i}")]);
        }
        b
    }

    #[tokio::test]
    async fn order_and_bound() {
        let b = backend(20);
        let out = generate_batch(&b, &reqs(20), 4, None).await.unwrap();
        assert_eq!(out.len(), 20);
        for (i, r) in out.iter().enumerate() {
            assert_eq!(r.as_ref().unwrap().texts, vec![format!("r{i}")]);
        }
        assert!(b.peak_in_flight() <= 4, "peak {}", b.peak_in_flight());
        assert!(b.peak_in_flight() > 1);
    }

    #[tokio::test]
    async fn isolation() {
        let b = backend(20).fail("p7", ScriptedFailure::Malformed, None);
        let out = generate_batch(&b, &reqs(20), 4, None).await.unwrap();
        assert_eq!(out.iter().filter(|r| r.is_ok()).count(), 19);
        assert!(out[7].is_err());
    }

    #[tokio::test]
    async fn empty_and_bad_bound() {
        let b = backend(0);
        assert!(generate_batch(&b, &[], 2, None).await.unwrap().is_empty());
        assert_eq!(generate_batch(&b, &[], 0, None).await, Err(BatchError::InvalidBound));
    }

    #[tokio::test]
    async fn cancellation() {
        let b = backend(5);
        let flag = CancelFlag::new();
        flag.cancel();
        assert_eq!(generate_batch(&b, &reqs(5), 2, Some(&flag)).await, Err(BatchError::Cancelled));
        assert_eq!(b.calls(), 0);
    }
}
