//! Per-student knowledge state.
//!
//! Mastery of each topic is tracked with Bayesian knowledge tracing: a
//! two-state (unlearned/learned) hidden Markov model observed through graded
//! exercise outcomes with slip and guess noise, followed by a learning
//! transition after every opportunity. Ungraded interactions (chat, lesson
//! views) are logged on the trajectory but never move mastery.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Topic;
use crate::planner::PrerequisiteGraph;

pub const MASTERED_THRESHOLD: f64 = 0.85;
pub const WEAK_THRESHOLD: f64 = 0.40;
pub const WEAK_MIN_ATTEMPTS: u32 = 3;

#[derive(Debug, Error, PartialEq)]
pub enum StudentError {
    #[error("student id must be non-empty")]
    EmptyStudentId,
    #[error("a student model needs at least one topic")]
    NoTopics,
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("invalid BKT parameters: {0}")]
    InvalidParams(&'static str),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("degenerate BKT denominator (p={p}, correct={correct})")]
    DegenerateDenominator { p: f64, correct: bool },
    #[error("event at {at} precedes the last trajectory event at {last}")]
    NonMonotonicTimestamp { at: DateTime<Utc>, last: DateTime<Utc> },
    #[error("exercise outcomes must go through record_outcome")]
    UngradedKindExpected,
    #[error("no topic state for graph node `{0}`")]
    MissingTopicState(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BktParams {
    pub p_init: f64,
    pub slip: f64,
    pub guess: f64,
    pub transit: f64,
}

impl Default for BktParams {
    fn default() -> Self {
        Self { p_init: 0.2, slip: 0.1, guess: 0.2, transit: 0.1 }
    }
}

impl BktParams {
    pub fn validate(&self) -> Result<(), StudentError> {
        let unit_open = |v: f64| v > 0.0 && v < 1.0;
        let unit_half_open = |v: f64| (0.0..1.0).contains(&v);
        if !unit_open(self.p_init) {
            return Err(StudentError::InvalidParams("p_init must lie in (0, 1)"));
        }
        if !unit_half_open(self.slip) {
            return Err(StudentError::InvalidParams("slip must lie in [0, 1)"));
        }
        if !unit_half_open(self.guess) {
            return Err(StudentError::InvalidParams("guess must lie in [0, 1)"));
        }
        if !unit_half_open(self.transit) {
            return Err(StudentError::InvalidParams("transit must lie in [0, 1)"));
        }
        if self.slip + self.guess >= 1.0 {
            return Err(StudentError::InvalidParams("slip + guess must be below 1"));
        }
        Ok(())
    }
}

/// One BKT step: Bayes posterior on the observation, then the learning transition.
pub fn bkt_update(p: f64, correct: bool, params: &BktParams) -> Result<f64, StudentError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(StudentError::InvalidProbability(p));
    }
    let (num, denom) = if correct {
        let num = p * (1.0 - params.slip);
        (num, num + (1.0 - p) * params.guess)
    } else {
        let num = p * params.slip;
        (num, num + (1.0 - p) * (1.0 - params.guess))
    };
    if denom == 0.0 {
        return Err(StudentError::DegenerateDenominator { p, correct });
    }
    let posterior = num / denom;
    Ok((posterior + (1.0 - posterior) * params.transit).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MasteryState {
    Untouched,
    Learning,
    Mastered,
    Weak,
}

impl MasteryState {
    pub const ALL: [MasteryState; 4] = [Self::Untouched, Self::Learning, Self::Mastered, Self::Weak];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Untouched => "Untouched",
            Self::Learning => "Learning",
            Self::Mastered => "Mastered",
            Self::Weak => "Weak",
        }
    }

    /// Knowledge-map legend color.
    pub fn legend_color(&self) -> &'static str {
        match self {
            Self::Untouched => "blue",
            Self::Learning => "yellow",
            Self::Mastered => "green",
            Self::Weak => "red",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicState {
    pub topic_id: String,
    pub mastery: f64,
    pub attempts: u32,
    pub correct_streak: u32,
    pub incorrect_streak: u32,
    pub last_outcome_at: Option<DateTime<Utc>>,
}

impl TopicState {
    pub fn fresh(topic_id: &str, p_init: f64) -> Self {
        Self {
            topic_id: topic_id.to_string(),
            mastery: p_init,
            attempts: 0,
            correct_streak: 0,
            incorrect_streak: 0,
            last_outcome_at: None,
        }
    }

    /// Name of the first violated field, if any.
    pub fn violation(&self) -> Option<&'static str> {
        if self.topic_id.is_empty() {
            Some("topic_id")
        } else if !(0.0..=1.0).contains(&self.mastery) {
            Some("mastery")
        } else if self.correct_streak > self.attempts {
            Some("correct_streak")
        } else if self.incorrect_streak > self.attempts || (self.correct_streak > 0 && self.incorrect_streak > 0) {
            Some("incorrect_streak")
        } else {
            None
        }
    }
}

/// Ordered threshold rules; first match wins.
pub fn classify_state(ts: &TopicState) -> MasteryState {
    if ts.attempts == 0 {
        MasteryState::Untouched
    } else if ts.mastery >= MASTERED_THRESHOLD {
        MasteryState::Mastered
    } else if ts.attempts >= WEAK_MIN_ATTEMPTS && ts.mastery < WEAK_THRESHOLD {
        MasteryState::Weak
    } else {
        MasteryState::Learning
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    ExerciseOutcome,
    ChatInteraction,
    LessonViewed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    pub at: DateTime<Utc>,
    pub kind: EventKind,
    /// Empty for chat turns not tied to a topic.
    pub topic_id: String,
    pub correct: Option<bool>,
    pub mastery_after: Option<f64>,
}

impl TrajectoryEvent {
    pub fn violation(&self) -> Option<&'static str> {
        let graded = self.kind == EventKind::ExerciseOutcome;
        if graded != self.correct.is_some() {
            return Some("correct");
        }
        if graded && self.mastery_after.is_none_or(|m| !(0.0..=1.0).contains(&m)) {
            return Some("mastery_after");
        }
        if graded && self.topic_id.is_empty() {
            return Some("topic_id");
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    pub student_id: String,
    pub params: BktParams,
    pub topic_states: BTreeMap<String, TopicState>,
    pub trajectory: Vec<TrajectoryEvent>,
}

pub fn init_student(student_id: &str, topics: &[Topic], params: BktParams) -> Result<StudentModel, StudentError> {
    if student_id.is_empty() {
        return Err(StudentError::EmptyStudentId);
    }
    if topics.is_empty() {
        return Err(StudentError::NoTopics);
    }
    params.validate()?;
    let topic_states =
        topics.iter().map(|t| (t.topic_id.clone(), TopicState::fresh(&t.topic_id, params.p_init))).collect();
    Ok(StudentModel { student_id: student_id.to_string(), params, topic_states, trajectory: Vec::new() })
}

impl StudentModel {
    pub fn topic(&self, topic_id: &str) -> Result<&TopicState, StudentError> {
        self.topic_states.get(topic_id).ok_or_else(|| StudentError::UnknownTopic(topic_id.to_string()))
    }

    pub fn mastery(&self, topic_id: &str) -> Result<f64, StudentError> {
        self.topic(topic_id).map(|t| t.mastery)
    }

    pub fn state(&self, topic_id: &str) -> Result<MasteryState, StudentError> {
        self.topic(topic_id).map(classify_state)
    }

    fn check_time(&self, at: DateTime<Utc>) -> Result<(), StudentError> {
        match self.trajectory.last() {
            Some(last) if at < last.at => Err(StudentError::NonMonotonicTimestamp { at, last: last.at }),
            _ => Ok(()),
        }
    }

    /// Applies a graded outcome. The model is untouched on error.
    pub fn record_outcome(
        &mut self,
        topic_id: &str,
        correct: bool,
        at: DateTime<Utc>,
    ) -> Result<&TopicState, StudentError> {
        self.check_time(at)?;
        let current = self.topic(topic_id)?.mastery;
        let mastery = bkt_update(current, correct, &self.params)?;

        let ts = self.topic_states.get_mut(topic_id).expect("checked above");
        ts.mastery = mastery;
        ts.attempts += 1;
        if correct {
            ts.correct_streak += 1;
            ts.incorrect_streak = 0;
        } else {
            ts.incorrect_streak += 1;
            ts.correct_streak = 0;
        }
        ts.last_outcome_at = Some(at);

        self.trajectory.push(TrajectoryEvent {
            at,
            kind: EventKind::ExerciseOutcome,
            topic_id: topic_id.to_string(),
            correct: Some(correct),
            mastery_after: Some(mastery),
        });
        Ok(&self.topic_states[topic_id])
    }

    /// Logs a chat turn or lesson view. `topic_id` may be empty for chat only.
    pub fn record_interaction(
        &mut self,
        kind: EventKind,
        topic_id: &str,
        at: DateTime<Utc>,
    ) -> Result<&TrajectoryEvent, StudentError> {
        if kind == EventKind::ExerciseOutcome {
            return Err(StudentError::UngradedKindExpected);
        }
        if !(topic_id.is_empty() && kind == EventKind::ChatInteraction) {
            self.topic(topic_id)?;
        }
        self.check_time(at)?;
        self.trajectory.push(TrajectoryEvent {
            at,
            kind,
            topic_id: topic_id.to_string(),
            correct: None,
            mastery_after: None,
        });
        Ok(self.trajectory.last().expect("just pushed"))
    }

    /// Timestamp no earlier than the last trajectory event.
    pub fn next_timestamp(&self, now: DateTime<Utc>) -> DateTime<Utc> {
        self.trajectory.last().map_or(now, |e| e.at.max(now))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeNode {
    pub topic_id: String,
    pub label: String,
    pub state: MasteryState,
    pub mastery: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEdge {
    pub prereq: String,
    pub dependent: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KnowledgeMap {
    pub nodes: Vec<KnowledgeNode>,
    pub edges: Vec<KnowledgeEdge>,
}

/// Graph nodes in topological order annotated with mastery. Labels come from
/// `topics`; a node without a label entry shows its id.
pub fn knowledge_map(
    model: &StudentModel,
    graph: &PrerequisiteGraph,
    topics: &[Topic],
) -> Result<KnowledgeMap, StudentError> {
    let nodes = graph
        .topological_order()
        .into_iter()
        .map(|id| {
            let ts = model.topic_states.get(&id).ok_or_else(|| StudentError::MissingTopicState(id.clone()))?;
            let label = topics.iter().find(|t| t.topic_id == id).map_or_else(|| id.clone(), |t| t.label.clone());
            Ok(KnowledgeNode { state: classify_state(ts), mastery: ts.mastery, topic_id: id, label })
        })
        .collect::<Result<Vec<_>, StudentError>>()?;
    let edges = graph.edges().iter().map(|(p, d)| KnowledgeEdge { prereq: p.clone(), dependent: d.clone() }).collect();
    Ok(KnowledgeMap { nodes, edges })
}
