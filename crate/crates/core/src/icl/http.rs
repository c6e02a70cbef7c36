use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatSpec, IclError, PromptPair};
use crate::transport::{HttpFailure, JsonClient};

pub const CHAT_KEY_ENV: &str = "RATERLENS_CHAT_KEY";

/// Chat-completions client: posts `{model, messages, temperature}` and reads
/// `choices[0].message.content`.
#[derive(Debug, Clone)]
pub struct HttpChatBackend {
    endpoint: String,
    model_id: String,
    temperature: f64,
    client: JsonClient,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 2],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: String,
}

impl HttpChatBackend {
    pub fn new(spec: &ChatSpec, api_key: Option<String>) -> Result<Self, IclError> {
        let endpoint = spec
            .endpoint
            .clone()
            .ok_or_else(|| IclError::Config("http chat provider requires an endpoint".into()))?;
        Ok(Self {
            endpoint,
            model_id: spec.model_id.clone(),
            temperature: spec.temperature,
            client: JsonClient::new(api_key, Duration::from_secs(spec.timeout_secs)),
        })
    }

    pub fn from_env(spec: &ChatSpec) -> Result<Self, IclError> {
        Self::new(spec, std::env::var(CHAT_KEY_ENV).ok())
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, _index: usize, pair: &PromptPair) -> Result<String, IclError> {
        let body = ChatRequest {
            model: &self.model_id,
            messages: [
                Message {
                    role: "system",
                    content: &pair.system,
                },
                Message {
                    role: "user",
                    content: &pair.user,
                },
            ],
            temperature: self.temperature,
        };
        let response: ChatResponse = self.client.post(&self.endpoint, &body).map_err(|e| match e {
            HttpFailure::Transport(message) => IclError::Transport { attempts: 1, message },
            HttpFailure::Malformed(m) => IclError::Malformed(m),
        })?;
        response
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| IclError::Malformed("response has no choices".into()))
    }
}
