//! Document ingestion, sentence-aligned chunking and topic extraction.
//!
//! Only plain text (`.txt`) and Markdown (`.md`) are accepted. Chunk offsets
//! are measured in Unicode scalar values (`char`s) into the document body, so
//! `body.chars().skip(start).take(end - start)` recovers a chunk's text.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::{is_stopword, slugify};

/// Upper bound on the length of a chunk, in characters.
pub const CHUNK_WINDOW: usize = 1200;

/// Number of term-frequency topics extracted from a plain-text document.
pub const TF_TOPIC_COUNT: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("unsupported document format for `{0}` (expected .txt or .md)")]
    UnsupportedFormat(String),
    #[error("document is empty")]
    EmptyDocument,
    #[error("document is not valid UTF-8: {0}")]
    InvalidEncoding(String),
    #[error("no topics found in document")]
    NoTopicsFound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentFormat {
    PlainText,
    Markdown,
}

impl DocumentFormat {
    pub fn from_filename(filename: &str) -> Result<Self, CorpusError> {
        let ext = Path::new(filename).extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("txt") => Ok(Self::PlainText),
            Some("md") => Ok(Self::Markdown),
            _ => Err(CorpusError::UnsupportedFormat(filename.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub format: DocumentFormat,
    pub body: String,
    pub ingested_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

impl Chunk {
    pub fn new(doc_id: &str, ordinal: usize, text: String, char_start: usize, char_end: usize) -> Self {
        Self {
            chunk_id: format!("{doc_id}#{ordinal}"),
            doc_id: doc_id.to_string(),
            ordinal,
            text,
            char_start,
            char_end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub topic_id: String,
    pub label: String,
    #[serde(default)]
    pub source_doc_ids: Vec<String>,
}

impl Topic {
    /// Builds a topic whose id is the slug of `label`.
    pub fn from_label(label: &str) -> Self {
        Self { topic_id: slugify(label), label: label.to_string(), source_doc_ids: Vec::new() }
    }
}

/// Content-addressed document id: `doc-` followed by the first 16 hex digits
/// of the SHA-256 of the raw bytes.
pub fn content_doc_id(raw: &[u8]) -> String {
    let digest = Sha256::digest(raw);
    let mut id = String::with_capacity(20);
    id.push_str("doc-");
    for byte in &digest[..8] {
        let _ = write!(id, "{byte:02x}");
    }
    id
}

pub fn ingest_document(raw: &[u8], filename: &str) -> Result<Document, CorpusError> {
    ingest_document_at(raw, filename, Utc::now())
}

/// Same as [`ingest_document`] with an explicit ingestion timestamp.
pub fn ingest_document_at(raw: &[u8], filename: &str, ingested_at: DateTime<Utc>) -> Result<Document, CorpusError> {
    let format = DocumentFormat::from_filename(filename)?;
    let body = std::str::from_utf8(raw).map_err(|e| CorpusError::InvalidEncoding(e.to_string()))?;
    if body.trim().is_empty() {
        return Err(CorpusError::EmptyDocument);
    }
    let title = Path::new(filename).file_stem().and_then(|s| s.to_str()).unwrap_or(filename).to_string();
    Ok(Document { doc_id: content_doc_id(raw), title, format, body: body.to_string(), ingested_at })
}

/// Splits `body` into sentence spans `[start, end)` in char offsets.
///
/// A sentence ends after a `.`, `?` or `!` that is followed by whitespace or
/// end-of-text; the whitespace run after the terminator belongs to the
/// sentence it closes. The spans tile the body exactly.
pub fn sentence_spans(body: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = body.chars().collect();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let terminal = matches!(c, '.' | '?' | '!') && chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        i += 1;
        if terminal {
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            spans.push((start, i));
            start = i;
        }
    }
    if start < chars.len() {
        spans.push((start, chars.len()));
    }
    spans
}

/// Greedy sentence packing into chunks of at most [`CHUNK_WINDOW`] chars.
pub fn segment(doc: &Document) -> Vec<Chunk> {
    let chars: Vec<char> = doc.body.chars().collect();

    // Sentences longer than the window are hard-split into window-sized units.
    let mut units = Vec::new();
    for (start, end) in sentence_spans(&doc.body) {
        let mut s = start;
        while end - s > CHUNK_WINDOW {
            units.push((s, s + CHUNK_WINDOW));
            s += CHUNK_WINDOW;
        }
        units.push((s, end));
    }

    let mut spans: Vec<(usize, usize)> = Vec::new();
    for (start, end) in units {
        match spans.last_mut() {
            Some(last) if end - last.0 <= CHUNK_WINDOW => last.1 = end,
            _ => spans.push((start, end)),
        }
    }

    spans
        .into_iter()
        .enumerate()
        .map(|(ordinal, (start, end))| {
            let text: String = chars[start..end].iter().collect();
            Chunk::new(&doc.doc_id, ordinal, text, start, end)
        })
        .collect()
}

/// Level-1 and level-2 ATX headings, in document order.
fn markdown_headings(body: &str) -> Vec<String> {
    body.lines()
        .filter_map(|line| {
            let line = line.trim_start();
            let rest = line.strip_prefix("## ").or_else(|| line.strip_prefix("# "))?;
            let text = rest.trim().trim_end_matches('#').trim();
            (!text.is_empty()).then(|| text.to_string())
        })
        .collect()
}

/// Lowercased whitespace-separated tokens with non-alphanumerics stripped.
fn tf_tokens(body: &str) -> impl Iterator<Item = String> + '_ {
    body.split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect::<String>())
        .filter(|t| !t.is_empty() && !is_stopword(t))
}

pub fn extract_topics(doc: &Document) -> Result<Vec<Topic>, CorpusError> {
    let mut by_id: BTreeMap<String, Topic> = BTreeMap::new();

    if doc.format == DocumentFormat::Markdown {
        for heading in markdown_headings(&doc.body) {
            let topic_id = slugify(&heading);
            if topic_id.is_empty() {
                continue;
            }
            by_id.entry(topic_id.clone()).or_insert_with(|| Topic {
                topic_id,
                label: heading,
                source_doc_ids: vec![doc.doc_id.clone()],
            });
        }
    }

    // Plain text, or Markdown without usable headings.
    if by_id.is_empty() {
        let mut freq: HashMap<String, usize> = HashMap::new();
        for token in tf_tokens(&doc.body) {
            *freq.entry(token).or_default() += 1;
        }
        let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        for (token, _) in ranked.into_iter().take(TF_TOPIC_COUNT) {
            by_id.insert(
                token.clone(),
                Topic { topic_id: token.clone(), label: token, source_doc_ids: vec![doc.doc_id.clone()] },
            );
        }
    }

    if by_id.is_empty() {
        return Err(CorpusError::NoTopicsFound);
    }
    Ok(by_id.into_values().collect())
}
