//! Parsing of sectioned model output.

use super::{ContentType, LessonContent, TutorError};

pub const SECTION_HEADERS: [&str; 7] =
    ["SUMMARY", "DEFINITIONS", "FEATURES", "IMPORTANCE", "CONNECTIONS", "EXAMPLES", "SOURCES"];

const DETAIL_SECTIONS: [&str; 5] = ["DEFINITIONS", "FEATURES", "IMPORTANCE", "CONNECTIONS", "EXAMPLES"];

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLesson {
    pub lesson: LessonContent,
    /// Cited ids that were not in the prompt's snippet block.
    pub dropped_sources: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAnswer {
    pub text: String,
    pub sources: Vec<String>,
    pub dropped_sources: usize,
}

/// Returns `(header, rest_of_line)` when `line` opens one of `headers`.
/// Leading markdown emphasis or heading marks are tolerated.
fn header_of<'a>(line: &'a str, headers: &[&'static str]) -> Option<(&'static str, &'a str)> {
    let bare = line.trim_start_matches(|c: char| c.is_whitespace() || c == '#' || c == '*');
    headers.iter().find_map(|h| {
        let rest = bare.strip_prefix(h)?.strip_prefix(':')?;
        Some((*h, rest.trim_start_matches('*')))
    })
}

/// Splits `raw` into sections keyed by header. The first occurrence of a header wins.
/// Text before the first header is returned under the empty key.
fn split_sections(raw: &str, headers: &[&'static str]) -> Vec<(&'static str, String)> {
    let mut sections: Vec<(&'static str, String)> = Vec::new();
    let mut current: (&'static str, Vec<&str>) = ("", Vec::new());
    let flush = |cur: &mut (&'static str, Vec<&str>), sections: &mut Vec<(&'static str, String)>| {
        let body = cur.1.join("\n").trim().to_string();
        if !sections.iter().any(|(h, _)| *h == cur.0) {
            sections.push((cur.0, body));
        }
    };
    for line in raw.lines() {
        if let Some((header, rest)) = header_of(line, headers) {
            flush(&mut current, &mut sections);
            current = (header, vec![rest]);
        } else {
            current.1.push(line);
        }
    }
    flush(&mut current, &mut sections);
    sections
}

/// Comma-separated ids, brackets optional, filtered to `allowed`, deduplicated.
pub fn parse_sources(line: &str, allowed: &[String]) -> (Vec<String>, usize) {
    let mut kept: Vec<String> = Vec::new();
    let mut dropped = 0;
    for raw in line.split([',', '\n']) {
        let id = raw.trim().trim_start_matches('[').trim_end_matches(']').trim();
        if id.is_empty() || id.eq_ignore_ascii_case("none") || id.eq_ignore_ascii_case("(none)") {
            continue;
        }
        if allowed.iter().any(|a| a == id) {
            if !kept.iter().any(|k| k == id) {
                kept.push(id.to_string());
            }
        } else {
            dropped += 1;
        }
    }
    (kept, dropped)
}

pub fn parse_lesson(
    raw: &str,
    topic_id: &str,
    content_type: ContentType,
    allowed_sources: &[String],
) -> Result<ParsedLesson, TutorError> {
    let sections = split_sections(raw, &SECTION_HEADERS);
    if sections.iter().all(|(h, _)| h.is_empty()) {
        return Err(TutorError::UnparseableResponse);
    }
    let get = |name: &str| sections.iter().find(|(h, _)| *h == name).map(|(_, body)| body.clone());

    let required: &[&str] = match content_type {
        ContentType::BriefSummary => &["SUMMARY"],
        ContentType::KnowledgeDetails => &DETAIL_SECTIONS,
    };
    for name in required {
        if get(name).is_none_or(|b| b.is_empty()) {
            return Err(TutorError::MissingSection(name.to_string()));
        }
    }

    let (sources, dropped_sources) = parse_sources(&get("SOURCES").unwrap_or_default(), allowed_sources);
    let field = |name: &str| get(name).unwrap_or_default();
    Ok(ParsedLesson {
        lesson: LessonContent {
            topic_id: topic_id.to_string(),
            content_type,
            brief_summary: field("SUMMARY"),
            definitions: field("DEFINITIONS"),
            features: field("FEATURES"),
            importance: field("IMPORTANCE"),
            connections: field("CONNECTIONS"),
            examples: field("EXAMPLES"),
            ungrounded: sources.is_empty(),
            sources,
        },
        dropped_sources,
    })
}

/// Chat replies: the `ANSWER:` section (or all text before `SOURCES:`) plus citations.
pub fn parse_answer(raw: &str, allowed_sources: &[String]) -> Result<ParsedAnswer, TutorError> {
    let sections = split_sections(raw, &["ANSWER", "SOURCES"]);
    let get = |name: &str| sections.iter().find(|(h, _)| *h == name).map(|(_, b)| b.clone());
    let text = get("ANSWER").or_else(|| get("")).unwrap_or_default();
    if text.is_empty() {
        return Err(TutorError::UnparseableResponse);
    }
    let (sources, dropped_sources) = parse_sources(&get("SOURCES").unwrap_or_default(), allowed_sources);
    Ok(ParsedAnswer { text, sources, dropped_sources })
}
