//! Client for remote embedding endpoints.
//!
//! Request body `{"model": ..., "input": [...]}`; the response must carry
//! `{"data": [{"embedding": [...]}, ...]}` in input order (an optional
//! `index` field on each item is honoured when present).

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingBackend, EncoderError, ProviderSpec, Result};
use crate::transport::{HttpFailure, JsonClient};

pub const EMBED_KEY_ENV: &str = "RATERLENS_EMBED_KEY";

#[derive(Debug, Clone)]
pub struct HttpEmbeddingBackend {
    endpoint: String,
    model_id: String,
    client: JsonClient,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

impl HttpEmbeddingBackend {
    pub fn new(spec: &ProviderSpec, api_key: Option<String>, timeout: Duration) -> Result<Self> {
        let endpoint = spec
            .endpoint
            .clone()
            .ok_or_else(|| EncoderError::Config("http provider requires an endpoint".into()))?;
        Ok(Self {
            endpoint,
            model_id: spec.model_id.clone(),
            client: JsonClient::new(api_key, timeout),
        })
    }

    pub fn from_env(spec: &ProviderSpec) -> Result<Self> {
        Self::new(spec, std::env::var(EMBED_KEY_ENV).ok(), Duration::from_secs(60))
    }
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let body = EmbedRequest {
            model: &self.model_id,
            input: texts,
        };
        let response: EmbedResponse = self.client.post(&self.endpoint, &body).map_err(|e| match e {
            HttpFailure::Transport(message) => EncoderError::Transport { attempts: 1, message },
            HttpFailure::Malformed(m) => EncoderError::Integrity(format!("malformed embedding response: {m}")),
        })?;
        let mut items = response.data;
        if items.iter().all(|i| i.index.is_some()) {
            items.sort_by_key(|i| i.index);
        }
        Ok(items.into_iter().map(|i| i.embedding).collect())
    }
}
