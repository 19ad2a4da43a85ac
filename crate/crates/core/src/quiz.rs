//! Practice sessions: assembly from a question bank, grading and review.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::DifficultyLevel;

pub const DEFAULT_QUIZ_LENGTH: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QuizError {
    #[error("no questions for topic `{0}`")]
    NoQuestionsForTopic(String),
    #[error("quiz length must be at least 1")]
    InvalidLength,
    #[error("invalid option `{given}` (expected an index below {options})")]
    InvalidOption { given: String, options: usize },
    #[error("question `{0}` is not part of this session")]
    UnknownQuestion(String),
    #[error("question `{0}` was already answered")]
    AlreadyAnswered(String),
    #[error("answer graded before the session started")]
    AnsweredBeforeStart,
    #[error("no answers recorded")]
    NoAnswers,
    #[error("invalid question: {0}")]
    InvalidQuestion(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    MultipleChoice,
    ShortAnswer,
}

/// Option index for multiple choice, expected text for short answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerKey {
    Index(usize),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub topic_id: String,
    pub difficulty: DifficultyLevel,
    pub kind: QuestionKind,
    pub stem: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    pub answer_key: AnswerKey,
    #[serde(default)]
    pub explanation: String,
}

impl Question {
    /// Name of the first invalid field, if any.
    pub fn violation(&self) -> Option<&'static str> {
        if self.question_id.is_empty() {
            return Some("question_id");
        }
        if self.stem.trim().is_empty() {
            return Some("stem");
        }
        match (&self.kind, &self.answer_key) {
            (QuestionKind::MultipleChoice, AnswerKey::Index(i)) => {
                if self.options.len() < 2 {
                    Some("options")
                } else if *i >= self.options.len() {
                    Some("answer_key")
                } else {
                    None
                }
            }
            (QuestionKind::ShortAnswer, AnswerKey::Text(t)) if !normalize_answer(t).is_empty() => None,
            _ => Some("answer_key"),
        }
    }

    pub fn validate(&self) -> Result<(), QuizError> {
        self.violation().map_or(Ok(()), |f| Err(QuizError::InvalidQuestion(f)))
    }
}

/// Trim, lowercase and collapse internal whitespace runs to one space.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question_id: String,
    pub given: String,
    pub correct: bool,
    pub graded_at: DateTime<Utc>,
}

pub fn grade_answer(q: &Question, given: &str, at: DateTime<Utc>) -> Result<AnswerRecord, QuizError> {
    let correct = match &q.answer_key {
        AnswerKey::Index(key) => {
            let invalid = || QuizError::InvalidOption { given: given.to_string(), options: q.options.len() };
            let idx: usize = given.trim().parse().map_err(|_| invalid())?;
            if idx >= q.options.len() {
                return Err(invalid());
            }
            idx == *key
        }
        AnswerKey::Text(key) => normalize_answer(key) == normalize_answer(given),
    };
    Ok(AnswerRecord { question_id: q.question_id.clone(), given: given.to_string(), correct, graded_at: at })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizSession {
    pub session_id: String,
    pub student_id: String,
    pub topic_id: String,
    pub level: DifficultyLevel,
    pub questions: Vec<Question>,
    pub answers: BTreeMap<String, AnswerRecord>,
    pub started_at: DateTime<Utc>,
}

/// Who is taking the quiz and when it starts.
#[derive(Debug, Clone)]
pub struct SessionMeta {
    pub session_id: String,
    pub student_id: String,
    pub started_at: DateTime<Utc>,
}

/// Picks up to `n` questions at `level`, topping up from one level easier and
/// then one level harder. Each level contributes in `question_id` order.
pub fn assemble_quiz(
    bank: &[Question],
    topic_id: &str,
    n: usize,
    level: DifficultyLevel,
    meta: SessionMeta,
) -> Result<QuizSession, QuizError> {
    if n == 0 {
        return Err(QuizError::InvalidLength);
    }
    let mut on_topic: Vec<&Question> = bank.iter().filter(|q| q.topic_id == topic_id).collect();
    if on_topic.is_empty() {
        return Err(QuizError::NoQuestionsForTopic(topic_id.to_string()));
    }
    on_topic.sort_by(|a, b| a.question_id.cmp(&b.question_id));

    let mut questions: Vec<Question> = Vec::with_capacity(n);
    for lvl in [Some(level), level.easier(), level.harder()].into_iter().flatten() {
        let room = n - questions.len();
        questions.extend(on_topic.iter().filter(|q| q.difficulty == lvl).take(room).map(|q| (*q).clone()));
        if questions.len() == n {
            break;
        }
    }

    Ok(QuizSession {
        session_id: meta.session_id,
        student_id: meta.student_id,
        topic_id: topic_id.to_string(),
        level,
        questions,
        answers: BTreeMap::new(),
        started_at: meta.started_at,
    })
}

impl QuizSession {
    pub fn question(&self, question_id: &str) -> Result<&Question, QuizError> {
        self.questions
            .iter()
            .find(|q| q.question_id == question_id)
            .ok_or_else(|| QuizError::UnknownQuestion(question_id.to_string()))
    }

    /// Grades without recording; lets callers validate before committing.
    pub fn grade(&self, question_id: &str, given: &str, at: DateTime<Utc>) -> Result<AnswerRecord, QuizError> {
        let q = self.question(question_id)?;
        if self.answers.contains_key(question_id) {
            return Err(QuizError::AlreadyAnswered(question_id.to_string()));
        }
        if at < self.started_at {
            return Err(QuizError::AnsweredBeforeStart);
        }
        grade_answer(q, given, at)
    }

    pub fn submit(&mut self, question_id: &str, given: &str, at: DateTime<Utc>) -> Result<AnswerRecord, QuizError> {
        let record = self.grade(question_id, given, at)?;
        self.answers.insert(question_id.to_string(), record.clone());
        Ok(record)
    }

    pub fn is_complete(&self) -> bool {
        self.answers.len() == self.questions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TopicTally {
    pub total: u32,
    pub missed: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub question: Question,
    pub given: String,
    pub correct: bool,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewReport {
    pub session_id: String,
    pub per_topic: BTreeMap<String, TopicTally>,
    pub items: Vec<ReviewItem>,
}

/// Tallies answered questions only, in session order.
pub fn review_session(session: &QuizSession) -> Result<ReviewReport, QuizError> {
    if session.answers.is_empty() {
        return Err(QuizError::NoAnswers);
    }
    let mut per_topic: BTreeMap<String, TopicTally> = BTreeMap::new();
    let mut items = Vec::with_capacity(session.answers.len());
    for q in &session.questions {
        let Some(answer) = session.answers.get(&q.question_id) else { continue };
        let tally = per_topic.entry(q.topic_id.clone()).or_default();
        tally.total += 1;
        if !answer.correct {
            tally.missed += 1;
        }
        items.push(ReviewItem {
            question: q.clone(),
            given: answer.given.clone(),
            correct: answer.correct,
            explanation: q.explanation.clone(),
        });
    }
    Ok(ReviewReport { session_id: session.session_id.clone(), per_topic, items })
}
