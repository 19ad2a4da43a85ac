//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

use expertagent_core::corpus::{Chunk, Topic};
use expertagent_core::planner::{PrerequisiteGraph, Recommendation, RecommendationReason};
use expertagent_core::retrieval::{embed_text, RetrievalIndex};
use expertagent_core::student_model::{init_student, BktParams, EventKind, StudentModel, TrajectoryEvent};

pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 6, 8, 0, 0).unwrap()
}

/// Mastery after each observation, by summing over every hidden learned/unlearned
/// path. The value after `t` observations is P(L_{t+1} = learned | o_1..o_t) in
/// a two-state HMM with no forgetting.
pub fn bkt_path_oracle(params: &BktParams, obs: &[bool]) -> Vec<f64> {
    (1..=obs.len()).map(|t| posterior_next_learned(params, &obs[..t])).collect()
}

fn posterior_next_learned(params: &BktParams, obs: &[bool]) -> f64 {
    let t = obs.len();
    let (mut learned, mut total) = (0.0, 0.0);
    // Bit i of `path` is the state at step i + 1; there are t + 1 states.
    for path in 0u32..(1 << (t + 1)) {
        let state = |i: usize| path >> i & 1 == 1;
        let mut w = if state(0) { params.p_init } else { 1.0 - params.p_init };
        for (i, &correct) in obs.iter().enumerate() {
            let p_correct = if state(i) { 1.0 - params.slip } else { params.guess };
            w *= if correct { p_correct } else { 1.0 - p_correct };
            w *= match (state(i), state(i + 1)) {
                (true, true) => 1.0,
                (true, false) => 0.0,
                (false, true) => params.transit,
                (false, false) => 1.0 - params.transit,
            };
        }
        total += w;
        if state(t) {
            learned += w;
        }
    }
    learned / total
}

/// Every outcome sequence of length `len`, as bit patterns.
pub fn all_sequences(len: usize) -> Vec<Vec<bool>> {
    (0u32..(1 << len)).map(|bits| (0..len).map(|i| bits >> i & 1 == 1).collect()).collect()
}

/// Scores every entry, sorts fully by (score desc, chunk_id asc) and cuts at `k`.
pub fn brute_force_top_k(index: &RetrievalIndex, query: &str, k: usize) -> Vec<(String, f64)> {
    let q = embed_text(query).unwrap();
    let mut scored: Vec<(String, f64)> = index
        .entries()
        .iter()
        .map(|e| {
            let dot = q.values().iter().zip(e.embedding.values()).map(|(a, b)| a * b).sum();
            (e.chunk_id.clone(), dot)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

const VOCAB: &[&str] = &[
    "gradient",
    "descent",
    "loss",
    "neuron",
    "layer",
    "weight",
    "bias",
    "kernel",
    "matrix",
    "vector",
    "tensor",
    "optimizer",
    "epoch",
    "batch",
    "dropout",
    "softmax",
    "entropy",
    "signal",
    "filter",
    "graph",
];

/// `n` chunks of random vocabulary words; some chunks repeat text so ties occur.
pub fn random_chunks(rng: &mut StdRng, n: usize) -> Vec<Chunk> {
    let mut texts: Vec<String> = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && rng.random_bool(0.1) {
            let j = rng.random_range(0..i);
            texts.push(texts[j].clone());
            continue;
        }
        let words = rng.random_range(1..12);
        let text: Vec<&str> = (0..words).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
        texts.push(text.join(" "));
    }
    texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| {
            let len = text.chars().count();
            Chunk::new("doc-test", i, text, 0, len)
        })
        .collect()
}

pub fn random_query(rng: &mut StdRng) -> String {
    let words = rng.random_range(1..5);
    (0..words).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect::<Vec<_>>().join(" ")
}

/// Random DAG on `n` nodes: edges only run forward along a shuffled order.
pub fn random_dag(rng: &mut StdRng, n: usize, edge_prob: f64) -> (Vec<Topic>, Vec<(String, String)>) {
    let topics: Vec<Topic> = (0..n).map(|i| Topic::from_label(&format!("t{i:02}"))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(edge_prob) {
                edges.push((topics[order[a]].topic_id.clone(), topics[order[b]].topic_id.clone()));
            }
        }
    }
    (topics, edges)
}

/// A model where each topic received a random number of random outcomes.
pub fn random_model(rng: &mut StdRng, topics: &[Topic]) -> StudentModel {
    let mut model = init_student("s", topics, BktParams::default()).unwrap();
    let mut at = epoch();
    for t in topics {
        let attempts = rng.random_range(0..7);
        let skill: f64 = rng.random();
        for _ in 0..attempts {
            at += Duration::seconds(1);
            model.record_outcome(&t.topic_id, rng.random_bool(skill), at).unwrap();
        }
    }
    model
}

/// Checks the recommendation invariants against thresholds restated here.
pub fn check_recommendations(
    model: &StudentModel,
    edges: &[(String, String)],
    graph: &PrerequisiteGraph,
    recs: &[Recommendation],
) -> Result<(), String> {
    let mut prereqs: HashMap<&str, Vec<&str>> = HashMap::new();
    for (p, d) in edges {
        prereqs.entry(d.as_str()).or_default().push(p.as_str());
    }
    let mastery = |id: &str| model.topic_states[id].mastery;
    let is_unlocked = |id: &str| prereqs.get(id).is_none_or(|ps| ps.iter().all(|p| mastery(p) >= 0.5));
    let expected_reason = |id: &str| {
        let ts = &model.topic_states[id];
        if ts.attempts == 0 {
            Some(RecommendationReason::NewUnlocked)
        } else if ts.mastery >= 0.85 {
            None
        } else if ts.attempts >= 3 && ts.mastery < 0.40 {
            Some(RecommendationReason::WeakRemediation)
        } else {
            Some(RecommendationReason::ContinueLearning)
        }
    };

    let topo = graph.topological_order();
    let pos: BTreeMap<&str, usize> = topo.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    if pos.len() != model.topic_states.len() {
        return Err("topological order does not cover every node".into());
    }
    for (p, d) in edges {
        if pos[p.as_str()] >= pos[d.as_str()] {
            return Err(format!("topological order puts {d} before its prerequisite {p}"));
        }
    }

    for (i, r) in recs.iter().enumerate() {
        if r.rank != i + 1 {
            return Err(format!("rank {} at position {}", r.rank, i));
        }
        if !is_unlocked(&r.topic_id) {
            return Err(format!("{} recommended while locked", r.topic_id));
        }
        match expected_reason(&r.topic_id) {
            None => return Err(format!("mastered topic {} recommended", r.topic_id)),
            Some(reason) if reason != r.reason => {
                return Err(format!("{} has reason {:?}, expected {:?}", r.topic_id, r.reason, reason))
            }
            _ => {}
        }
        if (r.mastery - mastery(&r.topic_id)).abs() > 0.0 {
            return Err(format!("{} reports stale mastery", r.topic_id));
        }
    }
    for w in recs.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.reason > b.reason {
            return Err(format!("tier order broken between {} and {}", a.topic_id, b.topic_id));
        }
        if a.reason == b.reason {
            let ok = match a.reason {
                RecommendationReason::NewUnlocked => pos[a.topic_id.as_str()] < pos[b.topic_id.as_str()],
                _ => a.mastery < b.mastery || (a.mastery == b.mastery && a.topic_id < b.topic_id),
            };
            if !ok {
                return Err(format!("within-tier order broken between {} and {}", a.topic_id, b.topic_id));
            }
        }
    }

    Ok(())
}

/// Number of topics that are unlocked and not mastered.
pub fn eligible_count(model: &StudentModel, edges: &[(String, String)]) -> usize {
    model
        .topic_states
        .iter()
        .filter(|(id, ts)| {
            let unlocked = edges.iter().filter(|(_, d)| d == *id).all(|(p, _)| model.topic_states[p].mastery >= 0.5);
            unlocked && !(ts.attempts > 0 && ts.mastery >= 0.85)
        })
        .count()
}

/// Replays graded events from the prior and returns the largest deviation from
/// the recorded `mastery_after` values and final topic masteries.
pub fn replay_deviation(model: &StudentModel, events: &[TrajectoryEvent]) -> f64 {
    let p = model.params;
    let mut mastery: BTreeMap<&str, f64> = model.topic_states.keys().map(|k| (k.as_str(), p.p_init)).collect();
    let mut worst: f64 = 0.0;
    for ev in events.iter().filter(|e| e.kind == EventKind::ExerciseOutcome) {
        let m = mastery.get_mut(ev.topic_id.as_str()).expect("known topic");
        let correct = ev.correct.expect("graded");
        let post = if correct {
            *m * (1.0 - p.slip) / (*m * (1.0 - p.slip) + (1.0 - *m) * p.guess)
        } else {
            *m * p.slip / (*m * p.slip + (1.0 - *m) * (1.0 - p.guess))
        };
        *m = post + (1.0 - post) * p.transit;
        worst = worst.max((*m - ev.mastery_after.expect("graded")).abs());
    }
    for (id, ts) in &model.topic_states {
        worst = worst.max((mastery[id.as_str()] - ts.mastery).abs());
    }
    worst
}
