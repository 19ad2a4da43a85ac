//! Language-model clients: the deterministic stub and a retrying remote wrapper.

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::{SNIPPET_IDS_PREFIX, TASK_LESSON};

pub const DEFAULT_MAX_OUTPUT_CHARS: usize = 8000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmMode {
    Stub,
    Remote,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("language model call failed after {attempts} attempt(s): {message}")]
pub struct ClientFailure {
    pub attempts: u32,
    pub message: String,
}

pub trait LlmClient: Send + Sync {
    fn mode(&self) -> LlmMode;
    fn complete(&self, prompt: &str, max_output_chars: usize) -> Result<String, ClientFailure>;
}

impl<T: LlmClient + ?Sized> LlmClient for Arc<T> {
    fn mode(&self) -> LlmMode {
        (**self).mode()
    }

    fn complete(&self, prompt: &str, max_output_chars: usize) -> Result<String, ClientFailure> {
        (**self).complete(prompt, max_output_chars)
    }
}

fn truncate_chars(mut s: String, max: usize) -> String {
    if let Some((idx, _)) = s.char_indices().nth(max) {
        s.truncate(idx);
    }
    s
}

/// Finds `KEY: value` at the start of a line.
fn line_value<'a>(prompt: &'a str, key: &str) -> Option<&'a str> {
    prompt.lines().find_map(|l| l.strip_prefix(key)).map(str::trim)
}

/// Canned, well-formed responses derived only from the prompt text. Cites the
/// first two snippet ids listed in the prompt.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubClient;

impl StubClient {
    fn cited_ids(prompt: &str) -> Vec<String> {
        line_value(prompt, SNIPPET_IDS_PREFIX)
            .filter(|v| *v != "(none)")
            .map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).take(2).collect())
            .unwrap_or_default()
    }

    fn excerpt(prompt: &str, id: &str) -> Option<String> {
        let marker = format!("[{id}] ");
        let line = prompt.lines().find_map(|l| l.strip_prefix(marker.as_str()))?;
        let words: Vec<&str> = line.split_whitespace().filter(|w| !w.chars().all(|c| c == '#')).take(24).collect();
        Some(words.join(" "))
    }

    fn respond(prompt: &str) -> String {
        let ids = Self::cited_ids(prompt);
        let sources = ids.join(", ");
        let evidence = ids
            .first()
            .and_then(|id| Self::excerpt(prompt, id))
            .unwrap_or_else(|| "no supporting course material was retrieved".to_string());

        if prompt.lines().any(|l| l == TASK_LESSON) {
            let topic = line_value(prompt, "TOPIC:").unwrap_or("this topic");
            let brief = line_value(prompt, "CONTENT TYPE:") == Some("brief_summary");
            let mut out = format!("SUMMARY: {topic}, in brief: {evidence}\n");
            if !brief {
                out.push_str(&format!(
                    "DEFINITIONS: {topic} is introduced in the course material as follows: {evidence}\n\
                     FEATURES: The defining features of {topic} appear in the cited passages.\n\
                     IMPORTANCE: {topic} matters because later topics build on it.\n\
                     CONNECTIONS: {topic} connects to the neighbouring topics of this course.\n\
                     EXAMPLES: Worked examples of {topic} are given in the cited passages.\n"
                ));
            }
            out.push_str(&format!("SOURCES: {sources}"));
            out
        } else {
            let question = prompt
                .lines()
                .filter_map(|l| l.strip_prefix("QUESTION:"))
                .next_back()
                .map(str::trim)
                .unwrap_or("your question");
            let answer = if ids.is_empty() {
                format!("The course material does not cover \"{question}\", so no grounded answer can be given.")
            } else {
                format!("For \"{question}\": {evidence}. This applies because the cited passage addresses it directly.")
            };
            format!("ANSWER: {answer}\nSOURCES: {sources}")
        }
    }
}

impl LlmClient for StubClient {
    fn mode(&self) -> LlmMode {
        LlmMode::Stub
    }

    fn complete(&self, prompt: &str, max_output_chars: usize) -> Result<String, ClientFailure> {
        Ok(truncate_chars(Self::respond(prompt), max_output_chars))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("server returned status {0}")]
    Status(u16),
    #[error("{0}")]
    Other(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            Self::Timeout | Self::Other(_) => true,
            Self::Status(s) => *s == 429 || *s >= 500,
        }
    }
}

/// One text-completion round trip to a remote provider.
pub trait CompletionTransport: Send + Sync {
    fn send(&self, prompt: &str, max_output_chars: usize) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, initial_backoff: Duration::from_millis(500), multiplier: 2 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff * self.multiplier.pow(retry.saturating_sub(1))
    }
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub struct RemoteClient<T> {
    transport: T,
    policy: RetryPolicy,
    sleep: Sleeper,
}

impl<T: fmt::Debug> fmt::Debug for RemoteClient<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteClient").field("transport", &self.transport).field("policy", &self.policy).finish()
    }
}

impl<T: CompletionTransport> RemoteClient<T> {
    pub fn new(transport: T) -> Self {
        Self::with_policy(transport, RetryPolicy::default(), Arc::new(std::thread::sleep))
    }

    pub fn with_policy(transport: T, policy: RetryPolicy, sleep: Sleeper) -> Self {
        Self { transport, policy, sleep }
    }
}

impl<T: CompletionTransport> LlmClient for RemoteClient<T> {
    fn mode(&self) -> LlmMode {
        LlmMode::Remote
    }

    fn complete(&self, prompt: &str, max_output_chars: usize) -> Result<String, ClientFailure> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.transport.send(prompt, max_output_chars) {
                Ok(text) => return Ok(truncate_chars(text, max_output_chars)),
                Err(e) if e.retryable() && attempts < self.policy.max_attempts => {
                    (self.sleep)(self.policy.backoff(attempts));
                }
                Err(e) => return Err(ClientFailure { attempts, message: e.to_string() }),
            }
        }
    }
}
