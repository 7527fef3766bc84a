use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Sampling temperature used for every experiment unless overridden.
pub const DEFAULT_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    model_id: &'a str,
    temperature: f64,
    messages: &'a [Message],
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<Message>) -> Self {
        ChatRequest {
            messages,
            temperature: DEFAULT_TEMPERATURE,
            model_id: model_id.into(),
            max_tokens: None,
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_max_tokens(mut self, n: Option<u32>) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.messages.is_empty() {
            return Err(Error::Argument("chat request has no messages".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::Argument(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of `(model_id, temperature, messages)`. `max_tokens` is
    /// deliberately not part of the key.
    pub fn cache_key(&self) -> String {
        let material = KeyMaterial {
            model_id: &self.model_id,
            temperature: self.temperature,
            messages: &self.messages,
        };
        let bytes = serde_json::to_vec(&material).expect("serialisable");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Same conversation with one more user turn appended.
    pub fn followed_by(&self, user: impl Into<String>) -> Self {
        let mut next = self.clone();
        next.messages.push(Message::user(user));
        next
    }

    /// Concatenated content of the user turns.
    pub fn user_text(&self) -> String {
        self.messages
            .iter()
            .filter(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn system_text(&self) -> String {
        self.messages
            .iter()
            .filter(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}
