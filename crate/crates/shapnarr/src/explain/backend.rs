//! Generation backends and the retrying `generate` entry point.
//!
//! A backend is anything that turns a prompt into text under
//! [`GenerationParams`]. The HTTP backend speaks the OpenAI-compatible
//! completions protocol (`POST {base_url}/v1/completions`, response text in
//! `choices[0].text`); the template backend emits deterministic sentences
//! straight from an attribution payload and keeps the whole pipeline
//! testable without a live LLM.

use super::payload::AttributionPayload;
use super::prompt::template_backend_generate;
use super::ExplainError;
use serde::{Deserialize, Serialize};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    /// Network failure or timeout; worth retrying.
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    /// The endpoint answered, but not with a usable completion.
    #[error("backend protocol error (status {status}): {body_excerpt}")]
    Protocol { status: u16, body_excerpt: String },
    #[error("backend returned an empty completion")]
    EmptyCompletion,
}

impl BackendError {
    /// Server-side trouble (network, timeout, 5xx) is retried; client-side
    /// protocol errors and empty completions are not.
    fn is_transient(&self) -> bool {
        match self {
            BackendError::Unavailable(_) => true,
            BackendError::Protocol { status, .. } => *status >= 500,
            BackendError::EmptyCompletion => false,
        }
    }
}

/// Sampling and transport parameters for one generation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_name: String,
    #[serde(rename = "timeout_secs", with = "duration_secs")]
    pub timeout: Duration,
    pub retries: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.2,
            max_tokens: 256,
            model_name: "mistral-7b".to_string(),
            timeout: Duration::from_secs(30),
            retries: 2,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), ExplainError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ExplainError::InvalidParams(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(ExplainError::InvalidParams(
                "max_tokens must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        if !secs.is_finite() || secs < 0.0 {
            return Err(serde::de::Error::custom("timeout_secs must be >= 0"));
        }
        Ok(Duration::from_secs_f64(secs))
    }
}

/// Anything that can complete a prompt.
pub trait GenerationBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, BackendError>;
}

/// Run one generation with retry handling: up to `params.retries` extra
/// attempts on transient failures, with a short exponential backoff between
/// attempts. Total wall time stays within `(retries + 1) * timeout` plus
/// backoff slack. A non-empty completion is returned verbatim.
pub fn generate(
    backend: &dyn GenerationBackend,
    prompt: &str,
    params: &GenerationParams,
) -> Result<String, BackendError> {
    let mut backoff = Duration::from_millis(100);
    let mut last_error = None;
    for attempt in 0..=params.retries {
        if attempt > 0 {
            std::thread::sleep(backoff);
            backoff = backoff.saturating_mul(2).min(Duration::from_secs(2));
        }
        match backend.complete(prompt, params) {
            Ok(text) if !text.trim().is_empty() => return Ok(text),
            Ok(_) => return Err(BackendError::EmptyCompletion),
            Err(e) if e.is_transient() => last_error = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_error.expect("at least one attempt always runs"))
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    text: String,
}

fn excerpt(body: &str) -> String {
    let trimmed = body.trim();
    let mut out: String = trimmed.chars().take(200).collect();
    if out.len() < trimmed.len() {
        out.push_str("...");
    }
    out
}

/// OpenAI-compatible completions client. The bearer token, when present, is
/// sent with every request; the per-request timeout comes from
/// [`GenerationParams`].
pub struct HttpBackend {
    endpoint: String,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(base_url: &str, token: Option<String>) -> Self {
        HttpBackend {
            endpoint: format!("{}/v1/completions", base_url.trim_end_matches('/')),
            token,
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl GenerationBackend for HttpBackend {
    fn id(&self) -> &str {
        "http"
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, BackendError> {
        let body = CompletionRequest {
            model: &params.model_name,
            prompt,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let mut request = self
            .client
            .post(&self.endpoint)
            .timeout(params.timeout)
            .json(&body);
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request
            .send()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Protocol {
                status,
                body_excerpt: excerpt(&text),
            });
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&text).map_err(|_| BackendError::Protocol {
                status,
                body_excerpt: excerpt(&text),
            })?;
        match parsed.choices.into_iter().next() {
            Some(choice) if !choice.text.trim().is_empty() => Ok(choice.text),
            _ => Err(BackendError::EmptyCompletion),
        }
    }
}

/// Deterministic backend that narrates the payload it was built from. The
/// prompt is ignored; the payload already carries everything the sentences
/// need.
pub struct TemplateBackend {
    payload: AttributionPayload,
    top_k: usize,
}

impl TemplateBackend {
    pub fn new(payload: AttributionPayload, top_k: usize) -> Self {
        TemplateBackend { payload, top_k }
    }
}

impl GenerationBackend for TemplateBackend {
    fn id(&self) -> &str {
        "template"
    }

    fn complete(&self, _prompt: &str, _params: &GenerationParams) -> Result<String, BackendError> {
        Ok(template_backend_generate(&self.payload, self.top_k))
    }
}
