//! HTTP completion transport for the remote language-model client.
//!
//! Wire format: `POST <url>` with JSON `{"prompt": ..., "max_output_chars": ...}`
//! and an optional bearer token; the reply is JSON `{"text": ...}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use expertagent_core::tutor::{CompletionTransport, TransportError};

pub const LLM_MODE_ENV: &str = "EXPERTAGENT_LLM_MODE";
pub const LLM_URL_ENV: &str = "EXPERTAGENT_LLM_URL";
pub const LLM_KEY_ENV: &str = "EXPERTAGENT_LLM_KEY";

const REQUEST_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_output_chars: usize,
}

#[derive(Deserialize)]
struct CompletionReply {
    text: String,
}

pub struct HttpTransport {
    url: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTransport").field("url", &self.url).field("key", &self.key.as_ref().map(|_| "***")).finish()
    }
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(REQUEST_TIMEOUT))
            .http_status_as_error(false)
            .build()
            .into();
        Self { url: url.into(), key: key.filter(|k| !k.is_empty()), agent }
    }
}

impl CompletionTransport for HttpTransport {
    fn send(&self, prompt: &str, max_output_chars: usize) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(CompletionRequest { prompt, max_output_chars }).map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Other(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(TransportError::Status(status));
        }
        resp.body_mut()
            .read_json::<CompletionReply>()
            .map(|r| r.text)
            .map_err(|e| TransportError::Other(format!("malformed completion reply: {e}")))
    }
}
