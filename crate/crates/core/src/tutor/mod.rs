//! Grounded lesson and chat generation.
//!
//! Retrieved snippets are embedded verbatim in the prompt under their chunk
//! ids; the model is asked for a fixed sectioned layout that ends with a
//! `SOURCES:` line. Parsing keeps only citations that were actually offered
//! in the prompt and counts the rest as dropped.

mod client;
mod parse;
mod prompt;

pub use client::{
    ClientFailure, CompletionTransport, LlmClient, LlmMode, RemoteClient, RetryPolicy, StubClient, TransportError,
    DEFAULT_MAX_OUTPUT_CHARS,
};
pub use parse::{parse_answer, parse_lesson, parse_sources, ParsedAnswer, ParsedLesson, SECTION_HEADERS};
pub use prompt::{build_chat_prompt, build_lesson_prompt, PromptBundle, HISTORY_WINDOW, NO_CONTEXT_MARKER};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Topic;
use crate::retrieval::RetrievedSnippet;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TutorError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("response is missing the {0} section")]
    MissingSection(String),
    #[error("response contains no recognizable sections")]
    UnparseableResponse,
    #[error(transparent)]
    Client(#[from] ClientFailure),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentType {
    BriefSummary,
    KnowledgeDetails,
}

impl ContentType {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::BriefSummary => "brief_summary",
            Self::KnowledgeDetails => "knowledge_details",
        }
    }
}

impl std::str::FromStr for ContentType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "brief_summary" => Ok(Self::BriefSummary),
            "knowledge_details" => Ok(Self::KnowledgeDetails),
            other => Err(format!("unknown content type `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LessonContent {
    pub topic_id: String,
    pub content_type: ContentType,
    pub brief_summary: String,
    pub definitions: String,
    pub features: String,
    pub importance: String,
    pub connections: String,
    pub examples: String,
    pub sources: Vec<String>,
    pub ungrounded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChatRole {
    Student,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: ChatRole,
    pub text: String,
    pub sources: Vec<String>,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatAnswer {
    pub turn: ChatTurn,
    /// No snippets were available to ground the answer.
    pub ungrounded: bool,
    pub dropped_sources: usize,
}

pub fn generate_lesson(
    topic: &Topic,
    content_type: ContentType,
    snippets: &[RetrievedSnippet],
    client: &dyn LlmClient,
) -> Result<ParsedLesson, TutorError> {
    let bundle = build_lesson_prompt(topic, content_type, snippets);
    let raw = client.complete(&bundle.render(), DEFAULT_MAX_OUTPUT_CHARS)?;
    parse_lesson(&raw, &topic.topic_id, content_type, &bundle.snippet_ids())
}

pub fn answer_chat(
    question: &str,
    snippets: &[RetrievedSnippet],
    history: &[ChatTurn],
    client: &dyn LlmClient,
    at: DateTime<Utc>,
) -> Result<ChatAnswer, TutorError> {
    let bundle = build_chat_prompt(question, snippets, history)?;
    let raw = client.complete(&bundle.render(), DEFAULT_MAX_OUTPUT_CHARS)?;
    let parsed = parse_answer(&raw, &bundle.snippet_ids())?;
    Ok(ChatAnswer {
        turn: ChatTurn { role: ChatRole::Agent, text: parsed.text, sources: parsed.sources, at },
        ungrounded: bundle.snippet_block.is_empty(),
        dropped_sources: parsed.dropped_sources,
    })
}
