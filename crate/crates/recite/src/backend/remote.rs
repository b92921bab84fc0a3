use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use recite_core::Strategy;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{truncate_at_stop, Backend, BackendError, GenerationRequest, GenerationResult};

/// Settings for an OpenAI-style `/completions` endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig { base_url: base_url.into(), model: model.into(), token_env: None, timeout_secs: default_timeout_secs() }
    }
}

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_k: Option<u32>,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
    n: u32,
    /// Best effort; providers that ignore it lose reproducibility.
    seed: u64,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    text: String,
    #[serde(default)]
    index: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    model: Option<String>,
    #[serde(default)]
    usage: Option<Value>,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    id: String,
    token: Option<String>,
    client: reqwest::Client,
}

impl RemoteBackend {
    /// Reads the token from `config.token_env` now, so a missing variable is
    /// reported at startup rather than on the first request.
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let token = match &config.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::InvalidRequest(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let id = format!("remote:{}", config.model);
        Ok(RemoteBackend { config, id, token, client })
    }

    fn endpoint(&self) -> String {
        format!("{}/completions", self.config.base_url.trim_end_matches('/'))
    }
}

fn retry_after_ms(headers: &reqwest::header::HeaderMap) -> Option<u64> {
    let secs: f64 = headers.get(reqwest::header::RETRY_AFTER)?.to_str().ok()?.trim().parse().ok()?;
    (secs >= 0.0).then_some((secs * 1000.0) as u64)
}

#[async_trait]
impl Backend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        request.check()?;
        let p = &request.params;
        let (temperature, top_k) = match p.strategy {
            Strategy::Greedy => (0.0, None),
            Strategy::TopK => (p.temperature.unwrap_or(1.0), p.k),
        };
        let body = WireRequest {
            model: &self.config.model,
            prompt: &request.prompt,
            max_tokens: p.max_tokens,
            temperature,
            top_k,
            stop: &p.stop_sequences,
            n: request.n_samples,
            seed: p.seed,
        };
        let mut http = self.client.post(self.endpoint()).json(&body);
        if let Some(t) = &self.token {
            http = http.bearer_auth(t);
        }
        let started = Instant::now();
        let resp = http.send().await.map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(BackendError::RateLimited { retry_after_ms: retry_after_ms(resp.headers()) });
        }
        if status.as_u16() == 408 || status.as_u16() == 504 {
            return Err(BackendError::Timeout);
        }
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(BackendError::Http { status: status.as_u16(), body: body.chars().take(500).collect() });
        }
        let bytes = resp.bytes().await.map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let wire: WireResponse =
            serde_json::from_slice(&bytes).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        if wire.choices.len() != request.n_samples as usize {
            return Err(BackendError::MalformedResponse(format!(
                "expected {} choices, got {}",
                request.n_samples,
                wire.choices.len()
            )));
        }
        let mut choices: Vec<(usize, String)> =
            wire.choices.into_iter().enumerate().map(|(i, c)| (c.index.unwrap_or(i), c.text)).collect();
        choices.sort_by_key(|(i, _)| *i);
        let texts = choices.into_iter().map(|(_, t)| truncate_at_stop(&t, &p.stop_sequences)).collect();

        let mut meta = BTreeMap::new();
        meta.insert("model".to_string(), wire.model.unwrap_or_else(|| self.config.model.clone()));
        if let Some(u) = wire.usage {
            meta.insert("usage".to_string(), u.to_string());
        }
        meta.insert("latency_ms".to_string(), started.elapsed().as_millis().to_string());
        Ok(GenerationResult { texts, meta, cache_hit: false })
    }
}
