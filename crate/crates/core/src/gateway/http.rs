//! OpenAI-compatible `chat/completions` client (blocking).

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::request::{ChatRequest, Message};
use crate::error::{Error, Result};

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Debug, Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

pub(crate) enum HttpFailure {
    Retryable(String),
    Fatal(Error),
}

pub(crate) struct OpenAiClient {
    url: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl OpenAiClient {
    pub(crate) fn new(endpoint: &str, api_key: String) -> Result<Self> {
        let base = endpoint.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| Error::Configuration(format!("cannot build HTTP client: {e}")))?;
        Ok(OpenAiClient {
            url,
            api_key,
            client,
        })
    }

    pub(crate) fn complete(&self, request: &ChatRequest) -> Result<String, HttpFailure> {
        let body = WireRequest {
            model: &request.model_id,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| HttpFailure::Retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| HttpFailure::Retryable(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(HttpFailure::Retryable(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(HttpFailure::Fatal(Error::Transport(format!(
                "HTTP {status}: {text}"
            ))));
        }
        let parsed: WireResponse = serde_json::from_str(&text).map_err(|e| {
            HttpFailure::Fatal(Error::Transport(format!("malformed completion body: {e}")))
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| HttpFailure::Fatal(Error::Transport("completion has no choices".into())))
    }
}
