//! Instructional planning over the student model: prerequisite gating,
//! next-topic recommendations, difficulty adjustment and review advice.
//!
//! Everything here is a pure function of immutable snapshots.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Topic;
use crate::quiz::ReviewReport;
use crate::retrieval::RetrievalIndex;
use crate::student_model::{classify_state, MasteryState, StudentModel};

/// Minimum mastery every prerequisite needs before a dependent unlocks.
pub const UNLOCK_THRESHOLD: f64 = 0.5;
pub const STREAK_UP: u32 = 3;
pub const STREAK_DOWN: u32 = 2;
pub const ADVICE_SNIPPETS: usize = 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge references unknown node `{0}`")]
    UnknownNode(String),
    #[error("prerequisite cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlannerError {
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
}

/// Acyclic prerequisite relation; edges are `(prereq, dependent)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PrerequisiteGraph {
    nodes: Vec<String>,
    edges: Vec<(String, String)>,
    prereqs: HashMap<String, Vec<String>>,
}

impl PrerequisiteGraph {
    pub fn new(nodes: Vec<String>, edges: Vec<(String, String)>) -> Result<Self, GraphError> {
        let known: BTreeSet<&str> = nodes.iter().map(String::as_str).collect();
        for (p, d) in &edges {
            for end in [p, d] {
                if !known.contains(end.as_str()) {
                    return Err(GraphError::UnknownNode(end.clone()));
                }
            }
        }
        let mut prereqs: HashMap<String, Vec<String>> = HashMap::new();
        for (p, d) in &edges {
            prereqs.entry(d.clone()).or_default().push(p.clone());
        }
        let graph = Self { nodes, edges, prereqs };
        if let Some(cycle) = graph.find_cycle() {
            return Err(GraphError::Cycle(cycle));
        }
        Ok(graph)
    }

    pub fn from_topics(topics: &[Topic], edges: Vec<(String, String)>) -> Result<Self, GraphError> {
        Self::new(topics.iter().map(|t| t.topic_id.clone()).collect(), edges)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn contains(&self, topic_id: &str) -> bool {
        self.nodes.iter().any(|n| n == topic_id)
    }

    pub fn prerequisites(&self, topic_id: &str) -> &[String] {
        self.prereqs.get(topic_id).map_or(&[], Vec::as_slice)
    }

    fn successors(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut succ: BTreeMap<&str, BTreeSet<&str>> =
            self.nodes.iter().map(|n| (n.as_str(), BTreeSet::new())).collect();
        for (p, d) in &self.edges {
            succ.entry(p.as_str()).or_default().insert(d.as_str());
        }
        succ
    }

    /// One cycle, listed from its lexicographically first entry point, if any.
    fn find_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let succ = self.successors();
        let mut mark: BTreeMap<&str, Mark> = succ.keys().map(|k| (*k, Mark::New)).collect();

        for &root in succ.keys() {
            if mark[root] != Mark::New {
                continue;
            }
            // Iterative DFS; `path` mirrors the Active nodes in order.
            let mut path: Vec<&str> = vec![root];
            let mut stack: Vec<std::collections::btree_set::Iter<'_, &str>> = vec![succ[root].iter()];
            mark.insert(root, Mark::Active);
            while let Some(iter) = stack.last_mut() {
                match iter.next() {
                    Some(&next) => match mark[next] {
                        Mark::New => {
                            mark.insert(next, Mark::Active);
                            path.push(next);
                            stack.push(succ[next].iter());
                        }
                        Mark::Active => {
                            let start = path.iter().position(|n| *n == next).expect("active node on path");
                            return Some(path[start..].iter().map(|s| s.to_string()).collect());
                        }
                        Mark::Done => {}
                    },
                    None => {
                        let done = path.pop().expect("path tracks stack");
                        mark.insert(done, Mark::Done);
                        stack.pop();
                    }
                }
            }
        }
        None
    }

    /// Kahn's algorithm, always taking the smallest available topic id.
    pub fn topological_order(&self) -> Vec<String> {
        let succ = self.successors();
        let mut indegree: BTreeMap<&str, usize> = succ.keys().map(|k| (*k, 0)).collect();
        for targets in succ.values() {
            for t in targets {
                *indegree.get_mut(t).expect("endpoint is a node") += 1;
            }
        }
        let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
        let mut order = Vec::with_capacity(succ.len());
        while let Some(n) = ready.pop_first() {
            order.push(n.to_string());
            for t in &succ[n] {
                let d = indegree.get_mut(t).expect("endpoint is a node");
                *d -= 1;
                if *d == 0 {
                    ready.insert(t);
                }
            }
        }
        order
    }
}

pub fn unlocked(graph: &PrerequisiteGraph, model: &StudentModel, topic_id: &str) -> Result<bool, PlannerError> {
    if !graph.contains(topic_id) || !model.topic_states.contains_key(topic_id) {
        return Err(PlannerError::UnknownTopic(topic_id.to_string()));
    }
    for p in graph.prerequisites(topic_id) {
        let mastery = model.topic_states.get(p).ok_or_else(|| PlannerError::UnknownTopic(p.clone()))?.mastery;
        if mastery < UNLOCK_THRESHOLD {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecommendationReason {
    WeakRemediation,
    ContinueLearning,
    NewUnlocked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub topic_id: String,
    pub reason: RecommendationReason,
    pub mastery: f64,
    pub rank: usize,
}

/// Three tiers: weak topics, then in-progress topics (both by ascending
/// mastery), then untouched topics in topological order. Every tier is
/// gated on `unlocked`; mastered topics never appear.
pub fn recommend_next(model: &StudentModel, graph: &PrerequisiteGraph, n: usize) -> Vec<Recommendation> {
    let mut weak = Vec::new();
    let mut learning = Vec::new();
    let mut untouched = Vec::new();

    for topic_id in graph.topological_order() {
        let Some(ts) = model.topic_states.get(&topic_id) else { continue };
        if !unlocked(graph, model, &topic_id).unwrap_or(false) {
            continue;
        }
        match classify_state(ts) {
            MasteryState::Weak => weak.push((ts.mastery, topic_id)),
            MasteryState::Learning => learning.push((ts.mastery, topic_id)),
            MasteryState::Untouched => untouched.push((ts.mastery, topic_id)),
            MasteryState::Mastered => {}
        }
    }
    let by_mastery = |a: &(f64, String), b: &(f64, String)| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1));
    weak.sort_by(by_mastery);
    learning.sort_by(by_mastery);

    [
        (weak, RecommendationReason::WeakRemediation),
        (learning, RecommendationReason::ContinueLearning),
        (untouched, RecommendationReason::NewUnlocked),
    ]
    .into_iter()
    .flat_map(|(tier, reason)| tier.into_iter().map(move |(mastery, topic_id)| (topic_id, reason, mastery)))
    .take(n)
    .enumerate()
    .map(|(i, (topic_id, reason, mastery))| Recommendation { topic_id, reason, mastery, rank: i + 1 })
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyLevel {
    Easy,
    #[default]
    Medium,
    Hard,
}

impl DifficultyLevel {
    pub fn harder(self) -> Option<Self> {
        match self {
            Self::Easy => Some(Self::Medium),
            Self::Medium => Some(Self::Hard),
            Self::Hard => None,
        }
    }

    pub fn easier(self) -> Option<Self> {
        match self {
            Self::Easy => None,
            Self::Medium => Some(Self::Easy),
            Self::Hard => Some(Self::Medium),
        }
    }
}

pub fn adjust_difficulty(ts: &crate::student_model::TopicState, current: DifficultyLevel) -> DifficultyLevel {
    if ts.correct_streak >= STREAK_UP {
        current.harder().unwrap_or(current)
    } else if ts.incorrect_streak >= STREAK_DOWN {
        current.easier().unwrap_or(current)
    } else {
        current
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdviceEntry {
    pub topic_id: String,
    pub message: String,
    pub snippet_refs: Vec<String>,
}

/// One entry per topic with misses, most misses first. References are the
/// top retrieval hits for the topic label; an absent or unusable index just
/// leaves them empty.
pub fn learning_advice(report: &ReviewReport, index: Option<&RetrievalIndex>, topics: &[Topic]) -> Vec<AdviceEntry> {
    let mut missed: Vec<(&String, u32, u32)> = report
        .per_topic
        .iter()
        .filter(|(_, tally)| tally.missed > 0)
        .map(|(id, tally)| (id, tally.missed, tally.total))
        .collect();
    missed.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    missed
        .into_iter()
        .map(|(topic_id, m, t)| {
            let label =
                topics.iter().find(|tp| &tp.topic_id == topic_id).map_or(topic_id.as_str(), |tp| tp.label.as_str());
            let snippet_refs = index
                .and_then(|idx| idx.retrieve(label, ADVICE_SNIPPETS).ok())
                .map(|hits| hits.into_iter().map(|h| h.chunk_id).collect())
                .unwrap_or_default();
            AdviceEntry {
                topic_id: topic_id.clone(),
                message: format!("Review {label}: you missed {m} of {t} questions."),
                snippet_refs,
            }
        })
        .collect()
}
