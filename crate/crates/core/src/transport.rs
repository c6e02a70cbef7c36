//! Minimal blocking JSON-over-HTTP helper shared by the embedding and chat clients.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug)]
pub(crate) enum HttpFailure {
    /// Connection problems, timeouts and non-2xx statuses. Worth retrying.
    Transport(String),
    /// The server answered but the body did not match the expected shape.
    Malformed(String),
}

#[derive(Clone)]
pub(crate) struct JsonClient {
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl std::fmt::Debug for JsonClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonClient")
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl JsonClient {
    pub(crate) fn new(api_key: Option<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).build();
        Self {
            agent: config.into(),
            api_key,
        }
    }

    pub(crate) fn post<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, HttpFailure> {
        let mut request = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| HttpFailure::Transport(e.to_string()))?;
        response
            .body_mut()
            .read_json::<R>()
            .map_err(|e| HttpFailure::Malformed(e.to_string()))
    }
}
