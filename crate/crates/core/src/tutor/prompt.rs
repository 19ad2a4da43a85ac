use serde::{Deserialize, Serialize};

use super::{ChatRole, ChatTurn, ContentType, TutorError};
use crate::corpus::Topic;
use crate::retrieval::RetrievedSnippet;

/// Chat turns carried into a prompt; older ones are dropped.
pub const HISTORY_WINDOW: usize = 10;

pub const NO_CONTEXT_MARKER: &str = "NO CONTEXT AVAILABLE";
pub const SNIPPET_IDS_PREFIX: &str = "SNIPPET IDS:";
pub const TASK_LESSON: &str = "TASK: LESSON";
pub const TASK_CHAT: &str = "TASK: CHAT";

const LESSON_SYSTEM: &str = "\
You are ExpertAgent, a tutor that teaches strictly from the course material supplied as context.
Reason through the material step by step before you write, then output only the sectioned lesson.
Write each section header at the start of its own line, in this order:
SUMMARY:, DEFINITIONS:, FEATURES:, IMPORTANCE:, CONNECTIONS:, EXAMPLES:, SOURCES:
For a brief summary only SUMMARY: and SOURCES: are required.
Explain why each point holds, and do not state facts the context does not support.
The final SOURCES: line lists the bracketed ids of the context snippets you relied on, comma-separated.";

const CHAT_SYSTEM: &str = "\
You are ExpertAgent, a tutor that answers student questions from the course material supplied as context.
Reason through the question step by step before you answer.
Give the answer after an ANSWER: header and explain why the concept or solution applies.
If the context does not cover the question, say so instead of guessing.
End with a SOURCES: line listing the bracketed ids of the context snippets you relied on, comma-separated.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub snippet_block: Vec<(String, String)>,
}

impl PromptBundle {
    /// Single text sent to a completion endpoint.
    pub fn render(&self) -> String {
        format!("{}\n\n{}", self.system_text, self.user_text)
    }

    pub fn snippet_ids(&self) -> Vec<String> {
        self.snippet_block.iter().map(|(id, _)| id.clone()).collect()
    }
}

/// Snippet text is flattened to one line so each `[id] text` entry stays on a single line.
fn snippet_block(snippets: &[RetrievedSnippet]) -> Vec<(String, String)> {
    snippets.iter().map(|s| (s.chunk_id.clone(), s.text.split_whitespace().collect::<Vec<_>>().join(" "))).collect()
}

fn push_ids_line(out: &mut String, block: &[(String, String)]) {
    out.push_str(SNIPPET_IDS_PREFIX);
    if block.is_empty() {
        out.push_str(" (none)");
    } else {
        let ids: Vec<&str> = block.iter().map(|(id, _)| id.as_str()).collect();
        out.push(' ');
        out.push_str(&ids.join(", "));
    }
    out.push('\n');
}

fn push_context(out: &mut String, block: &[(String, String)]) {
    out.push_str("CONTEXT:\n");
    if block.is_empty() {
        out.push_str(NO_CONTEXT_MARKER);
        out.push('\n');
    }
    for (id, text) in block {
        out.push('[');
        out.push_str(id);
        out.push_str("] ");
        out.push_str(text);
        out.push('\n');
    }
}

pub fn build_lesson_prompt(topic: &Topic, content_type: ContentType, snippets: &[RetrievedSnippet]) -> PromptBundle {
    let block = snippet_block(snippets);
    let mut user_text = String::new();
    push_ids_line(&mut user_text, &block);
    user_text.push_str(TASK_LESSON);
    user_text.push('\n');
    user_text.push_str(&format!("CONTENT TYPE: {}\n", content_type.as_str()));
    user_text.push_str(&format!("TOPIC: {}\n", topic.label));
    push_context(&mut user_text, &block);
    PromptBundle { system_text: LESSON_SYSTEM.to_string(), user_text, snippet_block: block }
}

pub fn build_chat_prompt(
    question: &str,
    snippets: &[RetrievedSnippet],
    history: &[ChatTurn],
) -> Result<PromptBundle, TutorError> {
    let question = question.trim();
    if question.is_empty() {
        return Err(TutorError::EmptyQuestion);
    }
    let block = snippet_block(snippets);
    let mut user_text = String::new();
    push_ids_line(&mut user_text, &block);
    user_text.push_str(TASK_CHAT);
    user_text.push('\n');

    let recent = &history[history.len().saturating_sub(HISTORY_WINDOW)..];
    if !recent.is_empty() {
        user_text.push_str("HISTORY:\n");
        for turn in recent {
            let who = match turn.role {
                ChatRole::Student => "Student",
                ChatRole::Agent => "Agent",
            };
            user_text.push_str(&format!("{who}: {}\n", turn.text));
        }
    }
    push_context(&mut user_text, &block);
    user_text.push_str(&format!("QUESTION: {question}\n"));
    Ok(PromptBundle { system_text: CHAT_SYSTEM.to_string(), user_text, snippet_block: block })
}
