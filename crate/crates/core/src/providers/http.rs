//! JSON-over-HTTP adapters: an OpenAI-style `/embeddings` endpoint and an
//! OpenAI-style `/chat/completions` endpoint.

use reqwest::blocking::{Client, RequestBuilder};
use serde::{Deserialize, Serialize};

use super::{ChatBackend, EmbeddingBackend, ProviderConfig};
use crate::error::{ProviderError, TransportError};

#[derive(Debug, Clone)]
struct Endpoint {
    client: Client,
    url: String,
    model_id: String,
    api_key_env: Option<String>,
}

impl Endpoint {
    fn new(config: &ProviderConfig, path: &str) -> Result<Self, ProviderError> {
        let base = config
            .base_url
            .as_deref()
            .ok_or_else(|| ProviderError::InvalidConfig("missing base_url".into()))?;
        let client = Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| ProviderError::InvalidConfig(format!("http client: {e}")))?;
        Ok(Self {
            client,
            url: format!("{}/{path}", base.trim_end_matches('/')),
            model_id: config.model_id.clone(),
            api_key_env: config.api_key_env.clone(),
        })
    }

    fn post<B: Serialize>(&self, body: &B) -> Result<RequestBuilder, TransportError> {
        let mut request = self.client.post(&self.url).json(body);
        if let Some(var) = &self.api_key_env {
            let key = std::env::var(var)
                .map_err(|_| TransportError::new(format!("environment variable {var} is not set")))?;
            request = request.bearer_auth(key);
        }
        Ok(request)
    }

    fn call<B: Serialize, R: for<'de> Deserialize<'de>>(&self, body: &B) -> Result<R, TransportError> {
        let response = self
            .post(body)?
            .send()
            .map_err(|e| TransportError::new(format!("{}: {e}", self.url)))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(TransportError::new(format!(
                "{} returned {status}: {}",
                self.url,
                text.chars().take(200).collect::<String>()
            )));
        }
        response
            .json()
            .map_err(|e| TransportError::new(format!("{}: bad response body: {e}", self.url)))
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HttpEmbeddingBackend {
    endpoint: Endpoint,
}

impl HttpEmbeddingBackend {
    pub fn new(config: &ProviderConfig) -> Result<Self, ProviderError> {
        Ok(Self {
            endpoint: Endpoint::new(config, "embeddings")?,
        })
    }
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn model_id(&self) -> &str {
        &self.endpoint.model_id
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, TransportError> {
        let mut response: EmbeddingResponse = self.endpoint.call(&EmbeddingRequest {
            model: &self.endpoint.model_id,
            input: texts,
        })?;
        if response.data.iter().all(|d| d.index.is_some()) {
            response.data.sort_by_key(|d| d.index);
        }
        Ok(response.data.into_iter().map(|d| d.embedding).collect())
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    stream: bool,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Clone)]
pub struct HttpChatBackend {
    endpoint: Endpoint,
    temperature: f64,
}

impl HttpChatBackend {
    pub fn new(config: &ProviderConfig) -> Result<Self, ProviderError> {
        Ok(Self {
            endpoint: Endpoint::new(config, "chat/completions")?,
            temperature: config.temperature,
        })
    }
}

impl ChatBackend for HttpChatBackend {
    fn model_id(&self) -> &str {
        &self.endpoint.model_id
    }

    fn send(&self, prompt: &str) -> Result<String, TransportError> {
        let response: ChatResponse = self.endpoint.call(&ChatRequest {
            model: &self.endpoint.model_id,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.temperature,
            stream: false,
        })?;
        Ok(response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }
}
