//! OpenAI-compatible HTTP clients for embeddings and completions.
//!
//! Transient failures (transport errors, timeouts, 408, 429, 5xx) are retried
//! with exponential backoff. Every logical request carries one
//! `X-Request-Id` across its retries.

use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use trajprompt_core::embedding::{check_values, EmbeddingBackend, EmbeddingError};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EndpointConfig {
    /// Full URL of the embeddings or completions route.
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub timeout_ms: u64,
    /// Maximum requests in flight.
    pub concurrency: usize,
    /// Texts per embeddings request.
    pub batch_size: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            url: String::new(),
            model: String::new(),
            api_key_env: "TRAJPROMPT_API_KEY".into(),
            max_attempts: 3,
            initial_backoff_ms: 500,
            timeout_ms: 120_000,
            concurrency: 4,
            batch_size: 32,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.url.is_empty() {
            return Err(Error::Config("endpoint url is empty".into()));
        }
        if self.max_attempts == 0 || self.concurrency == 0 || self.batch_size == 0 {
            return Err(Error::Config("endpoint max_attempts, concurrency and batch_size must be positive".into()));
        }
        Ok(())
    }
}

fn retryable(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

/// Blocking JSON-over-HTTP client with retry.
#[derive(Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    config: EndpointConfig,
    token: Option<String>,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient").field("config", &self.config).field("token", &self.token.as_ref().map(|_| "***")).finish()
    }
}

#[derive(Debug)]
pub struct Response<T> {
    pub body: T,
    pub retries: u32,
}

impl HttpClient {
    pub fn new(config: EndpointConfig) -> Result<Self> {
        config.validate()?;
        let token = std::env::var(&config.api_key_env).ok().filter(|t| !t.is_empty());
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpClient { agent, config, token })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn attempt<T: DeserializeOwned>(&self, body: &Value, request_id: &str) -> std::result::Result<T, (Option<u16>, String, bool)> {
        let mut req = self
            .agent
            .post(&self.config.url)
            .header("X-Request-Id", request_id)
            .header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req.send_json(body).map_err(|e| (None, e.to_string(), true))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            let snippet: String = text.chars().take(200).collect();
            return Err((Some(status), format!("HTTP {status}: {snippet}"), retryable(status)));
        }
        resp.body_mut()
            .with_config()
            .limit(512 * 1024 * 1024)
            .read_json::<T>()
            .map_err(|e| (Some(status), format!("unreadable response body: {e}"), false))
    }

    pub fn post_json<T: DeserializeOwned>(&self, body: &Value) -> Result<Response<T>> {
        let request_id = uuid::Uuid::new_v4().to_string();
        let mut backoff = self.config.initial_backoff_ms;
        let mut attempt = 1;
        loop {
            match self.attempt(body, &request_id) {
                Ok(body) => {
                    let retries = attempt - 1;
                    if retries > 0 {
                        log::info!("request {request_id} succeeded after {retries} retr{}", if retries == 1 { "y" } else { "ies" });
                    }
                    return Ok(Response { body, retries });
                }
                Err((_, msg, true)) if attempt < self.config.max_attempts => {
                    log::warn!(
                        "request {request_id} attempt {attempt}/{} failed ({msg}); retrying in {backoff} ms",
                        self.config.max_attempts
                    );
                    thread::sleep(Duration::from_millis(backoff));
                    backoff = backoff.saturating_mul(2);
                    attempt += 1;
                }
                Err((status, msg, _)) => {
                    return Err(Error::Transport { request_id, status, msg: format!("{msg} (after {attempt} attempt(s))") });
                }
            }
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f32>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

/// Remote embedding backend; the endpoint's single vector per input is used as-is.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    client: HttpClient,
    dim: usize,
}

impl RemoteEmbedder {
    /// `dim` is the dimension the vector store expects.
    pub fn new(config: EndpointConfig, dim: usize) -> Result<Self> {
        Ok(RemoteEmbedder { client: HttpClient::new(config)?, dim })
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let body = json!({ "input": texts, "model": self.client.config.model });
        let resp: Response<EmbeddingResponse> = self.client.post_json(&body)?;
        let mut items = resp.body.data;
        if items.len() != texts.len() {
            return Err(Error::Consistency(format!("embeddings endpoint returned {} vectors for {} inputs", items.len(), texts.len())));
        }
        if items.iter().all(|i| i.index.is_some()) {
            items.sort_by_key(|i| i.index);
            if items.iter().enumerate().any(|(n, i)| i.index != Some(n)) {
                return Err(Error::Consistency("embeddings endpoint returned non-contiguous indices".into()));
            }
        }
        items
            .into_iter()
            .map(|i| {
                if i.embedding.len() != self.dim {
                    return Err(Error::Consistency(format!(
                        "embeddings endpoint returned dim {}, store expects dim {}",
                        i.embedding.len(),
                        self.dim
                    )));
                }
                check_values(&i.embedding)?;
                Ok(i.embedding)
            })
            .collect()
    }
}

impl EmbeddingBackend for RemoteEmbedder {
    type Error = Error;

    fn name(&self) -> &str {
        &self.client.config.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    /// Batches of `batch_size`, at most `concurrency` in flight; output order
    /// follows input order.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        if let Some(i) = texts.iter().position(|t| t.is_empty()) {
            return Err(EmbeddingError::EmptyText { index: i }.into());
        }
        let batches: Vec<&[&str]> = texts.chunks(self.client.config.batch_size).collect();
        let workers = self.client.config.concurrency.min(batches.len()).max(1);
        let mut results: Vec<Option<Result<Vec<Vec<f32>>>>> = (0..batches.len()).map(|_| None).collect();
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots = std::sync::Mutex::new(&mut results);
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= batches.len() {
                        break;
                    }
                    let r = self.embed_batch(batches[i]);
                    slots.lock().expect("slot lock")[i] = Some(r);
                });
            }
        });
        let mut out = Vec::with_capacity(texts.len());
        for r in results {
            out.extend(r.expect("every batch ran")?);
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionApi {
    /// `POST {"prompt": ...}`, reads `choices[0].text`.
    #[default]
    Completions,
    /// `POST {"messages": [...]}`, reads `choices[0].message.content`.
    Chat,
}

#[derive(Debug, Clone)]
pub struct CompletionClient {
    client: HttpClient,
    api: CompletionApi,
    max_new_tokens: u32,
}

impl CompletionClient {
    pub fn new(config: EndpointConfig, api: CompletionApi, max_new_tokens: u32) -> Result<Self> {
        Ok(CompletionClient { client: HttpClient::new(config)?, api, max_new_tokens })
    }

    pub fn concurrency(&self) -> usize {
        self.client.config.concurrency
    }

    /// Greedy (temperature 0) continuation of `question`.
    pub fn complete(&self, question: &str) -> Result<String> {
        let model = &self.client.config.model;
        let body = match self.api {
            CompletionApi::Completions => json!({
                "model": model, "prompt": question, "temperature": 0, "max_tokens": self.max_new_tokens,
            }),
            CompletionApi::Chat => json!({
                "model": model,
                "messages": [{"role": "user", "content": question}],
                "temperature": 0,
                "max_tokens": self.max_new_tokens,
            }),
        };
        let resp: Response<Value> = self.client.post_json(&body)?;
        let choice = &resp.body["choices"][0];
        let text = match self.api {
            CompletionApi::Completions => choice["text"].as_str(),
            CompletionApi::Chat => choice["message"]["content"].as_str(),
        };
        text.map(str::to_owned).ok_or_else(|| Error::Transport {
            request_id: String::new(),
            status: Some(200),
            msg: "completion response has no text in choices[0]".into(),
        })
    }
}
