//! HTTP service and command-line front end for the tutoring engine.

pub mod api;
pub mod cli;
pub mod service;
pub mod transport;

use std::sync::Arc;

use expertagent_core::tutor::{LlmClient, RemoteClient, StubClient};

pub use service::{Service, ServiceError};

/// Picks the language-model client from `EXPERTAGENT_LLM_MODE` (stub unless
/// set to `remote`), `EXPERTAGENT_LLM_URL` and `EXPERTAGENT_LLM_KEY`.
pub fn client_from_env() -> Result<Arc<dyn LlmClient>, String> {
    let mode = std::env::var(transport::LLM_MODE_ENV).unwrap_or_else(|_| "stub".into());
    match mode.trim().to_ascii_lowercase().as_str() {
        "" | "stub" => Ok(Arc::new(StubClient)),
        "remote" => {
            let url = std::env::var(transport::LLM_URL_ENV)
                .map_err(|_| format!("{} is required in remote mode", transport::LLM_URL_ENV))?;
            let key = std::env::var(transport::LLM_KEY_ENV).ok();
            Ok(Arc::new(RemoteClient::new(transport::HttpTransport::new(url, key))))
        }
        other => Err(format!("unknown {} `{other}` (expected stub or remote)", transport::LLM_MODE_ENV)),
    }
}
