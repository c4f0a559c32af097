//! Embedding and chat-completion providers.
//!
//! Every model call goes through one of two clients:
//! - [`EmbeddingClient`]: batches of texts to vectors
//! - [`ChatClient`]: a prompt to a raw response plus any embedded JSON object
//!
//! Each client wraps a backend trait object, so HTTP services and the
//! in-process test doubles in [`doubles`] are interchangeable. Clients own
//! the retry policy and the in-flight concurrency limit.

mod doubles;
mod http;
mod json;

use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use doubles::{DeterministicEmbedder, OfflineChat, ScriptRule, ScriptedChat};
pub use http::{HttpChatBackend, HttpEmbeddingBackend};
pub use json::extract_json_object;

use crate::error::{ProviderError, TransportError};
use crate::scalar::Scalar;
use crate::vector::EmbeddingVector;

pub const MAX_RETRIES_LIMIT: u32 = 5;
pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// JSON over HTTP (`/embeddings` or `/chat/completions`).
    Http,
    /// Hashed bag-of-words embedder; embeddings only.
    Deterministic,
    /// Rule-based chat double that answers both prompt templates.
    Offline,
    /// Chat double replaying responses from a JSON-lines rule file.
    Scripted,
}

/// Connection settings for one model endpoint.
///
/// Only the *name* of the environment variable holding an API key is kept;
/// the key is read at request time and never stored or serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Output dimension of the deterministic embedder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Rule file for the scripted chat double.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
}

fn default_timeout_secs() -> f64 {
    60.0
}

fn default_max_retries() -> u32 {
    2
}

fn default_concurrency() -> usize {
    DEFAULT_CONCURRENCY
}

impl ProviderConfig {
    pub fn new(kind: ProviderKind, model_id: impl Into<String>) -> Self {
        Self {
            kind,
            model_id: model_id.into(),
            base_url: None,
            api_key_env: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            temperature: 0.0,
            concurrency: DEFAULT_CONCURRENCY,
            dim: None,
            script: None,
        }
    }

    pub fn deterministic(dim: usize) -> Self {
        let mut cfg = Self::new(ProviderKind::Deterministic, format!("hash-bow-{dim}"));
        cfg.dim = Some(dim);
        cfg
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let bad = |msg: String| Err(ProviderError::InvalidConfig(msg));
        if self.model_id.trim().is_empty() {
            return bad("model_id must be non-empty".into());
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return bad(format!("timeout_secs must be > 0, got {}", self.timeout_secs));
        }
        if self.max_retries > MAX_RETRIES_LIMIT {
            return bad(format!(
                "max_retries must be <= {MAX_RETRIES_LIMIT}, got {}",
                self.max_retries
            ));
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return bad(format!("temperature must be in [0, 1], got {}", self.temperature));
        }
        if self.concurrency == 0 {
            return bad("concurrency must be >= 1".into());
        }
        match self.kind {
            ProviderKind::Http if self.base_url.is_none() => {
                bad("http providers need base_url".into())
            }
            ProviderKind::Deterministic => match self.dim {
                Some(d) if d >= DeterministicEmbedder::MIN_DIM => Ok(()),
                other => bad(format!(
                    "deterministic embedder needs dim >= {}, got {other:?}",
                    DeterministicEmbedder::MIN_DIM
                )),
            },
            ProviderKind::Scripted if self.script.is_none() => {
                bad("scripted chat needs a script file".into())
            }
            _ => Ok(()),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    fn retry_policy(&self) -> RetryPolicy {
        let backoff = match self.kind {
            ProviderKind::Http => Duration::from_millis(250),
            _ => Duration::ZERO,
        };
        RetryPolicy {
            max_retries: self.max_retries,
            backoff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Initial delay, doubled after each failed attempt.
    pub backoff: Duration,
}

impl RetryPolicy {
    pub fn immediate(max_retries: u32) -> Self {
        Self {
            max_retries,
            backoff: Duration::ZERO,
        }
    }

    /// Runs `op` until it succeeds or `max_retries + 1` attempts have failed.
    /// Returns the value and the number of attempts used.
    pub fn run<T>(
        &self,
        mut op: impl FnMut(u32) -> Result<T, TransportError>,
    ) -> Result<(T, u32), ProviderError> {
        let mut delay = self.backoff;
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Ok(value) => return Ok((value, attempt)),
                Err(err) if attempt > self.max_retries => {
                    return Err(ProviderError::RetriesExhausted {
                        attempts: attempt,
                        last: err.0,
                    })
                }
                Err(err) => {
                    log::debug!("attempt {attempt} failed: {err}; retrying");
                    if !delay.is_zero() {
                        thread::sleep(delay);
                        delay *= 2;
                    }
                    attempt += 1;
                }
            }
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Gate {
    permits: Mutex<usize>,
    freed: Condvar,
}

struct GatePermit<'a>(&'a Gate);

impl Gate {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut free = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.freed.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        GatePermit(self)
    }
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        let mut free = self.0.permits.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.freed.notify_one();
    }
}

/// Raw access to an embedding model. One call is one transport attempt.
pub trait EmbeddingBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, TransportError>;
}

/// Raw access to a chat model. One call is one transport attempt.
pub trait ChatBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn send(&self, prompt: &str) -> Result<String, TransportError>;
}

#[derive(Clone)]
pub struct EmbeddingClient {
    backend: Arc<dyn EmbeddingBackend>,
    retry: RetryPolicy,
    gate: Arc<Gate>,
}

impl std::fmt::Debug for EmbeddingClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingClient")
            .field("model_id", &self.backend.model_id())
            .field("retry", &self.retry)
            .finish()
    }
}

impl EmbeddingClient {
    pub fn new(backend: Arc<dyn EmbeddingBackend>, retry: RetryPolicy, concurrency: usize) -> Self {
        Self {
            backend,
            retry,
            gate: Arc::new(Gate::new(concurrency)),
        }
    }

    /// Builds the client described by `config`. `seed` drives the
    /// deterministic embedder and is ignored by HTTP backends.
    pub fn from_config(config: &ProviderConfig, seed: u64) -> Result<Self, ProviderError> {
        config.validate()?;
        let backend: Arc<dyn EmbeddingBackend> = match config.kind {
            ProviderKind::Http => Arc::new(HttpEmbeddingBackend::new(config)?),
            ProviderKind::Deterministic => Arc::new(DeterministicEmbedder::with_model_id(
                seed,
                config.dim.unwrap_or_default(),
                config.model_id.clone(),
            )?),
            other => {
                return Err(ProviderError::InvalidConfig(format!(
                    "{other:?} providers cannot embed"
                )))
            }
        };
        Ok(Self::new(backend, config.retry_policy(), config.concurrency))
    }

    pub fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    /// Embeds `texts`, preserving order. All returned vectors share one
    /// dimension and carry this client's model id.
    pub fn embed_texts<S: Scalar>(
        &self,
        texts: &[&str],
    ) -> Result<Vec<EmbeddingVector<S>>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::InvalidInput("no texts to embed".into()));
        }
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(ProviderError::InvalidInput(format!("text #{i} is blank")));
        }
        let (raw, _) = {
            let _permit = self.gate.acquire();
            self.retry.run(|_| self.backend.embed_raw(texts))?
        };
        if raw.len() != texts.len() {
            return Err(ProviderError::ContractViolation(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                raw.len()
            )));
        }
        let dim = raw[0].len();
        raw.into_iter()
            .enumerate()
            .map(|(i, values)| {
                if values.len() != dim {
                    return Err(ProviderError::ContractViolation(format!(
                        "embedding #{i} has dim {} but batch dim is {dim}",
                        values.len()
                    )));
                }
                let values = values.into_iter().map(S::from_f64_lossy).collect();
                EmbeddingVector::new(values, self.model_id()).ok_or_else(|| {
                    ProviderError::ContractViolation(format!(
                        "embedding #{i} is empty or has non-finite values"
                    ))
                })
            })
            .collect()
    }
}

/// One prompt/response round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub prompt: String,
    pub raw_response: String,
    pub parsed_json: Option<Map<String, Value>>,
    pub attempt_count: u32,
}

#[derive(Clone)]
pub struct ChatClient {
    backend: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    gate: Arc<Gate>,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient")
            .field("model_id", &self.backend.model_id())
            .field("retry", &self.retry)
            .finish()
    }
}

impl ChatClient {
    pub fn new(backend: Arc<dyn ChatBackend>, retry: RetryPolicy, concurrency: usize) -> Self {
        Self {
            backend,
            retry,
            gate: Arc::new(Gate::new(concurrency)),
        }
    }

    pub fn from_config(config: &ProviderConfig) -> Result<Self, ProviderError> {
        config.validate()?;
        let backend: Arc<dyn ChatBackend> = match config.kind {
            ProviderKind::Http => Arc::new(HttpChatBackend::new(config)?),
            ProviderKind::Offline => Arc::new(OfflineChat::new(config.model_id.clone())),
            ProviderKind::Scripted => {
                let path = config.script.as_deref().unwrap_or_else(|| unreachable!());
                Arc::new(ScriptedChat::from_rule_file(config.model_id.clone(), path)?)
            }
            ProviderKind::Deterministic => {
                return Err(ProviderError::InvalidConfig(
                    "deterministic providers cannot chat".into(),
                ))
            }
        };
        Ok(Self::new(backend, config.retry_policy(), config.concurrency))
    }

    pub fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    pub fn max_retries(&self) -> u32 {
        self.retry.max_retries
    }

    pub fn chat_complete(&self, prompt: &str) -> Result<ChatExchange, ProviderError> {
        if prompt.trim().is_empty() {
            return Err(ProviderError::InvalidInput("prompt is blank".into()));
        }
        let (raw_response, attempt_count) = {
            let _permit = self.gate.acquire();
            self.retry.run(|_| self.backend.send(prompt))?
        };
        if raw_response.trim().is_empty() {
            return Err(ProviderError::EmptyResponse);
        }
        Ok(ChatExchange {
            prompt: prompt.to_owned(),
            parsed_json: extract_json_object(&raw_response),
            raw_response,
            attempt_count,
        })
    }
}
