//! Chat-completion client and the LLM extraction backend.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use super::prompt::{build_prompt, Exemplar, Prompt, PromptTask};
use super::response::{parse_drafts, parse_llm_response, parse_relevance, parse_sentiments, ParseMode};
use super::{BackendDescriptor, BackendMode, ExtractError, ExtractionBackend, ExtractionResult};
use crate::model::{Entry, EvaluationUnit, Taxonomy};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmMode {
    #[default]
    ZeroShot,
    FewShot,
    /// `model` names a remotely fine-tuned model.
    FineTuned,
}

/// Call structure: one combined request, or relevance → extraction → sentiment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    #[default]
    Combined,
    PerTask,
}

fn default_max_in_flight() -> usize {
    4
}
fn default_timeout_secs() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_max_backoff_ms() -> u64 {
    30_000
}

/// Connection and prompting settings for a chat-completion endpoint.
///
/// Requests go to `{base_url}/chat/completions`. The API key is read from
/// the environment variable named by `api_key_env`, never from this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmClientConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_max_backoff_ms")]
    pub max_backoff_ms: u64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub mode: LlmMode,
    #[serde(default)]
    pub task_mode: TaskMode,
    #[serde(default)]
    pub parse_mode: ParseMode,
    #[serde(default)]
    pub exemplars: Vec<Exemplar>,
    /// JSON-lines file of exemplars, appended to `exemplars` when loaded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplars_file: Option<PathBuf>,
    /// Lifts the 0 (zero-shot) / 10 (few-shot) exemplar count rule.
    #[serde(default)]
    pub any_exemplar_count: bool,
}

impl LlmClientConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: None,
            max_in_flight: default_max_in_flight(),
            timeout_secs: default_timeout_secs(),
            retries: default_retries(),
            backoff_base_ms: default_backoff_ms(),
            max_backoff_ms: default_max_backoff_ms(),
            temperature: 0.0,
            mode: LlmMode::ZeroShot,
            task_mode: TaskMode::Combined,
            parse_mode: ParseMode::Strict,
            exemplars: Vec::new(),
            exemplars_file: None,
            any_exemplar_count: false,
        }
    }

    pub const FEW_SHOT_EXEMPLARS: usize = 10;

    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: String| Err(LlmError::Config(m));
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1".into());
        }
        if !(self.timeout_secs > 0.0) {
            return bad("timeout_secs must be positive".into());
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return bad("temperature must be a non-negative number".into());
        }
        if !self.any_exemplar_count {
            let expected = match self.mode {
                LlmMode::FewShot => Self::FEW_SHOT_EXEMPLARS,
                LlmMode::ZeroShot | LlmMode::FineTuned => 0,
            };
            if self.exemplars.len() != expected {
                return bad(format!("{:?} mode expects {expected} exemplars, got {}", self.mode, self.exemplars.len()));
            }
        }
        Ok(())
    }

    fn backoff(&self, retry: u32) -> Duration {
        let ms = self.backoff_base_ms.saturating_mul(1u64 << retry.min(20)).min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingApiKey(String),
    #[error("invalid LLM configuration: {0}")]
    Config(String),
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("request rejected (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("unavailable after {attempts} attempt(s): {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("unexpected response envelope: {0}")]
    Envelope(String),
}

impl From<LlmError> for ExtractError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Auth { status } => ExtractError::Auth { status },
            LlmError::Unavailable { attempts, last } => ExtractError::BackendUnavailable { attempts, detail: last },
            LlmError::Rejected { status, body } => {
                ExtractError::BackendUnavailable { attempts: 1, detail: format!("HTTP {status}: {body}") }
            }
            LlmError::Envelope(detail) => ExtractError::MalformedResponse { reason: "bad envelope".into(), fragment: detail },
            other => ExtractError::Config(other.to_string()),
        }
    }
}

/// Assistant text plus transport bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmReply {
    pub text: String,
    pub attempts: u32,
    pub diagnostics: Vec<String>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: Option<String>,
}

/// HTTP chat-completion client with bounded parallelism and retries.
///
/// At most `max_in_flight` requests are outstanding at once across all
/// clones. Transport errors, 429 and 5xx are retried with exponential
/// backoff; 401/403 fail immediately.
#[derive(Debug, Clone)]
pub struct LlmClient {
    config: Arc<LlmClientConfig>,
    http: reqwest::Client,
    permits: Arc<Semaphore>,
    api_key: Option<String>,
    endpoint: String,
}

impl LlmClient {
    pub fn new(config: LlmClientConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| LlmError::MissingApiKey(var.clone()))?),
            None => None,
        };
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        let endpoint = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        Ok(Self {
            permits: Arc::new(Semaphore::new(config.max_in_flight)),
            config: Arc::new(config),
            http,
            api_key,
            endpoint,
        })
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.config
    }

    /// Sends one chat completion and returns the assistant text verbatim.
    pub async fn complete(&self, prompt: &Prompt) -> Result<LlmReply, LlmError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![
                ChatMessage { role: "system", content: &prompt.system },
                ChatMessage { role: "user", content: &prompt.user },
            ],
            temperature: self.config.temperature,
        };
        let mut diagnostics = Vec::new();
        let max_attempts = self.config.retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = self.permits.acquire().await.expect("semaphore never closed");
                self.send_once(&body).await
            };
            let failure = match outcome {
                Ok(text) => return Ok(LlmReply { text, attempts: attempt, diagnostics }),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(reason)) => reason,
            };
            if attempt >= max_attempts {
                return Err(LlmError::Unavailable { attempts: attempt, last: failure });
            }
            let wait = self.config.backoff(attempt - 1);
            tracing::debug!(attempt, ?wait, %failure, "retrying chat completion");
            diagnostics.push(format!("attempt {attempt}: {failure}; retrying in {}ms", wait.as_millis()));
            tokio::time::sleep(wait).await;
        }
    }

    async fn send_once(&self, body: &ChatRequest<'_>) -> Result<String, Attempt> {
        let mut request = self.http.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().await.map_err(|e| Attempt::Retryable(format!("transport: {e}")))?;
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(Attempt::Fatal(LlmError::Auth { status: status.as_u16() }));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retryable(format!("HTTP {}", status.as_u16())));
        }
        let text = response.text().await.map_err(|e| Attempt::Retryable(format!("transport: {e}")))?;
        if !status.is_success() {
            let body: String = text.chars().take(200).collect();
            return Err(Attempt::Fatal(LlmError::Rejected { status: status.as_u16(), body }));
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| Attempt::Fatal(LlmError::Envelope(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Attempt::Fatal(LlmError::Envelope("no assistant message".into())))
    }
}

enum Attempt {
    Retryable(String),
    Fatal(LlmError),
}

/// One-off blocking call. Must not be called from inside an async runtime.
pub fn call_llm(config: &LlmClientConfig, prompt: &Prompt) -> Result<LlmReply, LlmError> {
    let client = LlmClient::new(config.clone())?;
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| LlmError::Config(e.to_string()))?;
    runtime.block_on(client.complete(prompt))
}

/// Extraction through a chat-completion model.
///
/// The sync [`ExtractionBackend`] methods drive an internal runtime and must
/// not be called from async code; use [`LlmBackend::extract_async`] there.
#[derive(Debug)]
pub struct LlmBackend {
    client: LlmClient,
    runtime: tokio::runtime::Runtime,
}

impl LlmBackend {
    pub fn new(config: LlmClientConfig) -> Result<Self, LlmError> {
        let client = LlmClient::new(config)?;
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self { client, runtime })
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }

    pub async fn extract_async(&self, entry: &Entry, taxonomy: &Taxonomy) -> Result<ExtractionResult, ExtractError> {
        let config = self.client.config();
        let exemplars = &config.exemplars;
        match config.task_mode {
            TaskMode::Combined => {
                let prompt = build_prompt(PromptTask::Combined, entry, taxonomy, exemplars);
                let reply = self.client.complete(&prompt).await?;
                let mut result = parse_llm_response(&entry.id, &reply.text, taxonomy, config.parse_mode)?;
                let mut diagnostics = reply.diagnostics;
                diagnostics.append(&mut result.diagnostics);
                result.diagnostics = diagnostics;
                Ok(result)
            }
            TaskMode::PerTask => {
                let mut diagnostics = Vec::new();
                let reply = self.client.complete(&build_prompt(PromptTask::Relevance, entry, taxonomy, exemplars)).await?;
                diagnostics.extend(reply.diagnostics);
                if !parse_relevance(&reply.text)? {
                    return Ok(ExtractionResult { diagnostics, ..ExtractionResult::irrelevant(entry.id.clone()) });
                }
                let reply = self.client.complete(&build_prompt(PromptTask::Extraction, entry, taxonomy, exemplars)).await?;
                diagnostics.extend(reply.diagnostics);
                let (_, drafts) = parse_drafts(&reply.text, taxonomy, config.parse_mode, &mut diagnostics)?;
                let mut units = Vec::with_capacity(drafts.len());
                if !drafts.is_empty() {
                    let prompt = build_prompt(PromptTask::Sentiment(&drafts), entry, taxonomy, exemplars);
                    let reply = self.client.complete(&prompt).await?;
                    diagnostics.extend(reply.diagnostics);
                    let scores = parse_sentiments(&reply.text, drafts.len())?;
                    units.extend(drafts.into_iter().zip(scores).map(|(d, sentiment)| EvaluationUnit {
                        entry_id: entry.id.clone(),
                        object_text: d.object,
                        content_text: d.content,
                        indicator_id: d.indicator,
                        sentiment,
                    }));
                }
                Ok(ExtractionResult { entry_id: entry.id.clone(), relevant: true, units, diagnostics })
            }
        }
    }
}

impl ExtractionBackend for LlmBackend {
    fn descriptor(&self) -> BackendDescriptor {
        let config = self.client.config();
        let mode = match config.mode {
            LlmMode::ZeroShot => BackendMode::ZeroShot,
            LlmMode::FewShot => BackendMode::FewShot,
            LlmMode::FineTuned => BackendMode::FineTuned,
        };
        BackendDescriptor { name: format!("llm:{}", config.model), mode }
    }

    fn extract(&self, entry: &Entry, taxonomy: &Taxonomy) -> Result<ExtractionResult, ExtractError> {
        self.runtime.block_on(self.extract_async(entry, taxonomy))
    }

    fn extract_batch(&self, entries: &[Entry], taxonomy: &Taxonomy) -> Vec<Result<ExtractionResult, ExtractError>> {
        let limit = self.client.config().max_in_flight;
        self.runtime.block_on(
            stream::iter(entries)
                .map(|e| async move {
                    let mut result = self.extract_async(e, taxonomy).await?;
                    result.stamp_units();
                    result
                        .check(taxonomy)
                        .map_err(|detail| ExtractError::InvalidOutput { entry_id: e.id.clone(), detail })?;
                    Ok(result)
                })
                .buffered(limit)
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exemplar_count_rules() {
        let mut c = LlmClientConfig::new("http://localhost:1", "m");
        assert!(c.validate().is_ok());
        c.mode = LlmMode::FewShot;
        assert!(matches!(c.validate(), Err(LlmError::Config(_))));
        c.any_exemplar_count = true;
        assert!(c.validate().is_ok());
        c.max_in_flight = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn backoff_is_exponential_and_capped() {
        let c = LlmClientConfig { backoff_base_ms: 100, max_backoff_ms: 1000, ..LlmClientConfig::new("x", "m") };
        let waits: Vec<u128> = (0..6).map(|r| c.backoff(r).as_millis()).collect();
        assert_eq!(waits, [100, 200, 400, 800, 1000, 1000]);
    }

    #[test]
    fn missing_api_key_is_reported() {
        let c = LlmClientConfig {
            api_key_env: Some("HQEVAL_TEST_KEY_THAT_IS_NEVER_SET".into()),
            ..LlmClientConfig::new("http://localhost:1", "m")
        };
        assert_eq!(
            LlmClient::new(c).unwrap_err(),
            LlmError::MissingApiKey("HQEVAL_TEST_KEY_THAT_IS_NEVER_SET".into())
        );
    }
}
