//! Blocking HTTP client for OpenAI-style `/chat/completions` endpoints with
//! bounded retries and exponential backoff.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{
    Completion, CompletionBackend, EndpointConfig, FinishReason, GenerationRequest, RolloutError,
};

pub struct HttpEndpoint {
    config: EndpointConfig,
    client: reqwest::blocking::Client,
}

impl HttpEndpoint {
    pub fn new(config: EndpointConfig) -> Result<Self, RolloutError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| RolloutError::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn bearer_token(&self) -> Result<Option<String>, RolloutError> {
        match &self.config.auth_token_env {
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| RolloutError::AuthMissing(var.clone())),
            None => Ok(None),
        }
    }

    fn post_once(
        &self,
        url: &str,
        token: Option<&str>,
        body: &serde_json::Value,
    ) -> Result<ChatResponse, RolloutError> {
        let mut builder = self.client.post(url).json(body);
        if let Some(token) = token {
            builder = builder.bearer_auth(token);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                RolloutError::Timeout(e.to_string())
            } else {
                RolloutError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            let excerpt: String = body.chars().take(512).collect();
            return Err(RolloutError::Endpoint {
                status: status.as_u16(),
                body: excerpt,
            });
        }
        response.json::<ChatResponse>().map_err(|e| {
            if e.is_timeout() {
                RolloutError::Timeout(e.to_string())
            } else {
                RolloutError::Transport(format!("malformed response body: {e}"))
            }
        })
    }
}

impl CompletionBackend for HttpEndpoint {
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<Completion>, RolloutError> {
        request.validate()?;
        let token = self.bearer_token()?;
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let mut body = json!({
            "model": self.config.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
            "n": request.n_samples,
        });
        if request.logprobs {
            body["logprobs"] = json!(true);
        }

        let mut attempt = 0;
        let parsed = loop {
            match self.post_once(&url, token.as_deref(), &body) {
                Ok(parsed) => break parsed,
                Err(err) if err.is_retryable() && attempt < self.config.max_retries => {
                    let backoff = self.config.backoff_base_secs * f64::powi(2.0, attempt as i32);
                    log::warn!(
                        "request {} attempt {} failed ({err}); retrying in {backoff:.3}s",
                        request.request_id,
                        attempt
                    );
                    std::thread::sleep(Duration::from_secs_f64(backoff));
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        };

        if parsed.choices.len() != request.n_samples as usize {
            return Err(RolloutError::Endpoint {
                status: 200,
                body: format!(
                    "expected {} choices, endpoint returned {}",
                    request.n_samples,
                    parsed.choices.len()
                ),
            });
        }
        Ok(parsed
            .choices
            .into_iter()
            .enumerate()
            .map(|(i, choice)| Completion {
                request_id: request.request_id.clone(),
                sample_index: choice.index.unwrap_or(i as u32),
                text: choice.message.content,
                token_logprobs: choice
                    .logprobs
                    .map(|lp| lp.content.into_iter().map(|t| t.logprob).collect()),
                finish_reason: match choice.finish_reason.as_deref() {
                    Some("stop") | None => FinishReason::Stop,
                    Some("length") => FinishReason::Length,
                    Some(_) => FinishReason::Error,
                },
            })
            .collect())
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    #[serde(default)]
    index: Option<u32>,
    message: ChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<LogprobPayload>,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: String,
}

#[derive(Debug, Deserialize)]
struct LogprobPayload {
    #[serde(default)]
    content: Vec<TokenLogprob>,
}

#[derive(Debug, Deserialize)]
struct TokenLogprob {
    logprob: f64,
}
