//! Live OpenAI-compatible chat-completions backend with bounded retry.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ChatRequest, Completion, GatewayError};

pub const API_KEY_ENV: &str = "CUP_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub endpoint: String,
    pub model: String,
    /// Explicit key; falls back to the `CUP_API_KEY` environment variable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    pub timeout_ms: u64,
    pub retry_base_ms: u64,
    pub max_attempts: u32,
    pub max_in_flight: usize,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            model: "gpt-4o".to_string(),
            api_key: None,
            timeout_ms: 60_000,
            retry_base_ms: 200,
            max_attempts: 3,
            max_in_flight: 4,
        }
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
}

#[derive(Deserialize)]
struct WireResponseMessage {
    content: Option<String>,
}

pub(super) struct LiveBackend {
    config: LiveConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl LiveBackend {
    pub(super) fn new(config: LiveConfig) -> Result<LiveBackend, GatewayError> {
        let api_key = config
            .api_key
            .clone()
            .or_else(|| std::env::var(API_KEY_ENV).ok())
            .filter(|k| !k.is_empty())
            .ok_or(GatewayError::AuthMissing)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
        Ok(LiveBackend {
            config,
            api_key,
            client,
        })
    }

    pub(super) fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let body = WireRequest {
            model: &self.config.model,
            messages: request
                .messages
                .iter()
                .map(|(role, text)| WireMessage {
                    role: role.as_str(),
                    content: text,
                })
                .collect(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let started = Instant::now();
        let mut last_error = String::new();
        for attempt in 1..=self.config.max_attempts {
            match self.try_once(&body) {
                Ok(text) => {
                    return Ok(Completion {
                        text,
                        backend: super::BackendKind::Live,
                        latency_ms: started.elapsed().as_millis() as u64,
                    })
                }
                Err(Transient::Yes(msg)) => {
                    last_error = msg;
                    if attempt < self.config.max_attempts {
                        let backoff = self.config.retry_base_ms.saturating_mul(1 << (attempt - 1));
                        std::thread::sleep(Duration::from_millis(backoff));
                    }
                }
                Err(Transient::No(msg)) => return Err(GatewayError::BackendUnavailable(msg)),
            }
        }
        Err(GatewayError::BackendUnavailable(format!(
            "{} attempts failed; last error: {last_error}",
            self.config.max_attempts
        )))
    }

    fn try_once(&self, body: &WireRequest<'_>) -> Result<String, Transient> {
        let response = self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| Transient::Yes(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Transient::Yes(format!("http status {status}")));
        }
        if !status.is_success() {
            return Err(Transient::No(format!("http status {status}")));
        }
        let parsed: WireResponse = response
            .json()
            .map_err(|e| Transient::Yes(format!("bad response body: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        Ok(text)
    }
}

enum Transient {
    Yes(String),
    No(String),
}
