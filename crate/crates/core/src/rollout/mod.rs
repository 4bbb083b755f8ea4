//! Client for OpenAI-compatible chat-completion endpoints plus a
//! deterministic in-process mock for tests and offline runs.

mod http;
mod mock;

pub use http::HttpEndpoint;
pub use mock::{AnswerKey, MockEndpoint};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How to reach and drive an endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    /// Name of the environment variable holding the bearer token; `None`
    /// sends no Authorization header. Tokens are never read from flags or
    /// config files.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_base_secs: f64,
    pub max_in_flight: usize,
    /// Model name placed in the request body.
    #[serde(default = "default_model")]
    pub model: String,
}

fn default_model() -> String {
    "default".to_string()
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".to_string(),
            auth_token_env: None,
            timeout_secs: 120.0,
            max_retries: 3,
            backoff_base_secs: 0.5,
            max_in_flight: 16,
            model: default_model(),
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), RolloutError> {
        if self.max_in_flight < 1 {
            return Err(RolloutError::InvalidRequest(
                "max_in_flight must be at least 1".to_string(),
            ));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(RolloutError::InvalidRequest(
                "timeout must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".to_string(),
            content: content.into(),
        }
    }
}

/// One generation call: `n_samples` completions for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub request_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub n_samples: u32,
    /// Ask the endpoint for per-token logprobs.
    #[serde(default)]
    pub logprobs: bool,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<(), RolloutError> {
        if self.n_samples < 1 {
            return Err(RolloutError::InvalidRequest(
                "n_samples must be at least 1".to_string(),
            ));
        }
        if self.temperature < 0.0 {
            return Err(RolloutError::InvalidRequest(
                "temperature must be non-negative".to_string(),
            ));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(RolloutError::InvalidRequest(
                "top_p must be in (0, 1]".to_string(),
            ));
        }
        if self.messages.is_empty() {
            return Err(RolloutError::InvalidRequest(
                "messages must not be empty".to_string(),
            ));
        }
        Ok(())
    }

    /// Content of the last user message, if any.
    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

/// One sampled completion, tied back to its request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub request_id: String,
    pub sample_index: u32,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint error {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("auth token environment variable '{0}' is not set")]
    AuthMissing(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no fixture scripted for message key {0:#x}")]
    UnknownFixtureKey(u64),
    #[error("rigged mock has no answer key for question '{0}'")]
    UnknownQuestion(String),
}

impl RolloutError {
    /// Transport faults and 5xx/429 statuses are retryable; everything else
    /// fails immediately.
    pub fn is_retryable(&self) -> bool {
        match self {
            RolloutError::Timeout(_) | RolloutError::Transport(_) => true,
            RolloutError::Endpoint { status, .. } => *status == 429 || (500..=599).contains(status),
            _ => false,
        }
    }
}

/// Anything that can serve chat completions: the HTTP client or the mock.
pub trait CompletionBackend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<Completion>, RolloutError>;
}

/// Run `requests` against a backend with at most `max_in_flight` calls
/// outstanding. Results come back in request order, independent of
/// completion order.
pub fn generate_batch(
    backend: &dyn CompletionBackend,
    max_in_flight: usize,
    requests: &[GenerationRequest],
) -> Vec<Result<Vec<Completion>, RolloutError>> {
    assert!(max_in_flight >= 1, "max_in_flight must be at least 1");
    let workers = max_in_flight.min(requests.len()).max(1);
    let cursor = std::sync::atomic::AtomicUsize::new(0);
    type Slot = std::sync::Mutex<Option<Result<Vec<Completion>, RolloutError>>>;
    let slots: Vec<Slot> = (0..requests.len())
        .map(|_| std::sync::Mutex::new(None))
        .collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = cursor.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= requests.len() {
                    break;
                }
                let result = backend.generate(&requests[idx]);
                *slots[idx].lock().unwrap() = Some(result);
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every slot filled"))
        .collect()
}
