//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;
#[path = "../../core/tests/support/mod.rs"]
mod oracles;

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::TimeZone;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use expertagent::api::router;
use expertagent::Service;
use expertagent_core::corpus::Topic;
use expertagent_core::feedback::{
    aggregate_acceptance, half_up_hundredths, AcceptanceCategory, AcceptanceResponse, FeedbackLevel, FeedbackRecord,
};
use expertagent_core::persistence::{load_course, DataDir};
use expertagent_core::planner::{recommend_next, PrerequisiteGraph};
use expertagent_core::retrieval::build_index;
use expertagent_core::student_model::{bkt_update, classify_state, init_student, BktParams, MasteryState, TopicState};
use expertagent_core::tutor::StubClient;

use common::{correct_answer, course_path, get, post, ticking_clock, wrong_answer};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, budget: Duration) -> Result<(), String> {
    ensure(elapsed < budget, || format!("took {elapsed:.2?}, budget {budget:?}"))
}

fn bkt_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let params = BktParams::default();
    let topics = [Topic::from_label("t")];
    let mut worst: f64 = 0.0;
    let sequences = oracles::all_sequences(5);
    for seq in &sequences {
        let mut model = init_student("s", &topics, params).map_err(|e| e.to_string())?;
        let want = oracles::bkt_path_oracle(&params, seq);
        for (i, (&correct, w)) in seq.iter().zip(&want).enumerate() {
            let at = oracles::epoch() + chrono::Duration::seconds(i as i64);
            let got = model.record_outcome("t", correct, at).map_err(|e| e.to_string())?.mastery;
            worst = worst.max((got - w).abs());
        }
    }
    let elapsed = start.elapsed();
    ensure(sequences.len() == 32, || format!("{} sequences", sequences.len()))?;
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("32 sequences x 5 steps, max deviation {worst:.1e}, {elapsed:.2?}"))
}

fn hand_values() -> Outcome {
    let p = BktParams::default();
    let up = bkt_update(0.2, true, &p).map_err(|e| e.to_string())?;
    let down = bkt_update(0.2, false, &p).map_err(|e| e.to_string())?;
    // Hand computation: 0.2*0.9 / (0.2*0.9 + 0.8*0.2) = 9/17, then 9/17 + (8/17)(1/10) = 49/85.
    // Incorrect: 0.02 / (0.02 + 0.64) = 1/33, then 1/33 + (32/33)(1/10) = 7/55.
    let (exact_up, exact_down) = (49.0 / 85.0, 7.0 / 55.0);
    ensure((up - exact_up).abs() <= 1e-9, || format!("correct -> {up}, hand value {exact_up}"))?;
    ensure((down - exact_down).abs() <= 1e-9, || format!("incorrect -> {down}, hand value {exact_down}"))?;
    // The eight-decimal renderings must match the published figures.
    ensure(format!("{up:.8}") == "0.57647059", || format!("correct renders as {up:.8}"))?;
    ensure(format!("{down:.8}") == "0.12727273", || format!("incorrect renders as {down:.8}"))?;
    Ok(format!(
        "correct -> {up:.8} (|d| vs 49/85 = {:.1e}), incorrect -> {down:.8} (|d| vs 7/55 = {:.1e})",
        (up - exact_up).abs(),
        (down - exact_down).abs()
    ))
}

fn retrieval_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(2024);
    let mut queries = 0;
    for corpus in 0..50 {
        let n = rng.random_range(1..=1000);
        let chunks = oracles::random_chunks(&mut rng, n);
        let index = build_index(&chunks).map_err(|e| e.to_string())?;
        for k in [1, 4, rng.random_range(1..=n + 5)] {
            let query = oracles::random_query(&mut rng);
            let got: Vec<(String, f64)> = index
                .retrieve(&query, k)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|s| (s.chunk_id, s.score))
                .collect();
            let want = oracles::brute_force_top_k(&index, &query, k);
            ensure(got == want, || format!("corpus {corpus} (n={n}), k={k}, query {query:?}: top-k differs"))?;
            queries += 1;
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!("50 corpora, {queries} queries, exact match, {elapsed:.2?}"))
}

fn mastery_legend() -> Outcome {
    let fresh = TopicState::fresh("t", 0.2);
    let with = |attempts: u32, mastery: f64| TopicState { attempts, mastery, ..fresh.clone() };
    let cases = [
        (fresh.clone(), MasteryState::Untouched),
        (with(1, 0.57), MasteryState::Learning),
        (with(5, 0.9), MasteryState::Mastered),
        (with(3, 0.1), MasteryState::Weak),
    ];
    for (ts, want) in &cases {
        let got = classify_state(ts);
        ensure(got == *want, || format!("{ts:?} classified {got:?}"))?;
    }
    let legend: Vec<(String, &str)> = MasteryState::ALL
        .iter()
        .map(|s| (serde_json::to_value(s).unwrap().as_str().unwrap_or_default().to_string(), s.legend_color()))
        .collect();
    let expected = [("Untouched", "blue"), ("Learning", "yellow"), ("Mastered", "green"), ("Weak", "red")];
    ensure(legend.iter().map(|(n, c)| (n.as_str(), *c)).eq(expected), || format!("legend {legend:?}"))?;
    ensure(serde_json::from_value::<MasteryState>(json!("Forgotten")).is_err(), || "fifth state parsed".into())?;
    // Every reachable state over a dense grid lands in the legend.
    for attempts in 0..6 {
        for step in 0..=100 {
            let s = classify_state(&with(attempts, step as f64 / 100.0));
            ensure(MasteryState::ALL.contains(&s), || format!("{s:?} outside legend"))?;
        }
    }
    Ok("Untouched=blue, Learning=yellow, Mastered=green, Weak=red".into())
}

fn acceptance_aggregation() -> Outcome {
    // Nine responses per category with sums 39, 38, 25 and 38.
    let datasets: [(AcceptanceCategory, [u8; 9], f64); 4] = [
        (AcceptanceCategory::PerformanceExpectancy, [5, 5, 5, 4, 4, 4, 4, 4, 4], 4.33),
        (AcceptanceCategory::EffortExpectancy, [5, 5, 4, 4, 4, 4, 4, 4, 4], 4.22),
        (AcceptanceCategory::SocialInfluence, [3, 3, 3, 3, 3, 3, 3, 2, 2], 2.78),
        (AcceptanceCategory::FacilitatingConditions, [5, 4, 5, 4, 4, 4, 4, 4, 4], 4.22),
    ];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = DataDir::new(dir.path());
    for (category, ratings, _) in &datasets {
        for (i, &rating) in ratings.iter().enumerate() {
            let resp = AcceptanceResponse { respondent_id: format!("r{i}"), category: *category, rating };
            store.append_acceptance(&resp).map_err(|e| e.to_string())?;
        }
    }
    let averages = aggregate_acceptance(&store.load_acceptance().map_err(|e| e.to_string())?);
    let mut shown = Vec::new();
    for (category, ratings, published) in &datasets {
        let sum: u64 = ratings.iter().map(|&r| u64::from(r)).sum();
        let mean = averages.means.get(category).copied().unwrap_or(f64::NAN);
        ensure(averages.counts.get(category) == Some(&9), || format!("{category:?} count"))?;
        ensure(mean == *published, || format!("{category:?}: sum {sum}, mean {mean}, expected {published}"))?;
        ensure(half_up_hundredths(sum, 9) == (published * 100.0).round() as u64, || {
            format!("{category:?} hundredths")
        })?;
        shown.push(format!("{mean:.2}"));
    }
    Ok(format!("means ({})", shown.join(", ")))
}

fn planner_safety() -> Outcome {
    let mut rng = StdRng::seed_from_u64(500);
    let mut emitted = 0;
    for round in 0..500 {
        let n = rng.random_range(1..=50);
        let density = rng.random_range(0.0..0.25);
        let (topics, edges) = oracles::random_dag(&mut rng, n, density);
        let graph = PrerequisiteGraph::from_topics(&topics, edges.clone()).map_err(|e| e.to_string())?;
        let model = oracles::random_model(&mut rng, &topics);
        let recs = recommend_next(&model, &graph, usize::MAX);
        oracles::check_recommendations(&model, &edges, &graph, &recs).map_err(|e| format!("DAG {round}: {e}"))?;
        let eligible = oracles::eligible_count(&model, &edges);
        ensure(recs.len() == eligible, || format!("DAG {round}: {} of {eligible} eligible topics", recs.len()))?;
        emitted += recs.len();
    }
    Ok(format!("500 DAGs, {emitted} recommendations, none locked or mastered, tiers ordered"))
}

fn code(v: &Value) -> String {
    v["error"]["code"].as_str().unwrap_or("").to_string()
}

fn node_state(map: &Value, topic: &str) -> String {
    map["nodes"]
        .as_array()
        .and_then(|ns| ns.iter().find(|n| n["topic_id"] == topic))
        .and_then(|n| n["state"].as_str())
        .unwrap_or("missing")
        .to_string()
}

async fn feedback_loop(data_dir: &Path) -> Outcome {
    let start = Instant::now();
    let course = load_course(&course_path()).map_err(|e| e.to_string())?;
    let svc = Service::new(DataDir::new(data_dir), course, Arc::new(StubClient))
        .map_err(|e| e.to_string())?
        .with_clock(ticking_clock());
    let app = router(Arc::new(svc));

    for name in ["vectors.md", "probability.md", "gradient-descent.md"] {
        let content = std::fs::read_to_string(course_path().parent().unwrap().join("docs").join(name))
            .map_err(|e| e.to_string())?;
        let (s, body) = post(&app, "/documents", json!({"filename": name, "content": content})).await;
        ensure(s.as_u16() == 201, || format!("ingest {name}: {s} {body}"))?;
    }
    let (s, _) = post(&app, "/students", json!({"student_id": "learner"})).await;
    ensure(s.as_u16() == 201, || format!("create student: {s}"))?;

    let (s, chat) =
        post(&app, "/chat", json!({"student_id": "learner", "question": "What does the learning rate control?"})).await;
    ensure(s.is_success(), || format!("chat: {s} {}", code(&chat)))?;
    let snippet_ids: Vec<&str> =
        chat["snippets"].as_array().into_iter().flatten().filter_map(|s| s["chunk_id"].as_str()).collect();
    let sources: Vec<&str> =
        chat["answer"]["sources"].as_array().into_iter().flatten().filter_map(|s| s.as_str()).collect();
    ensure(!sources.is_empty(), || "chat answer cites nothing".into())?;
    ensure(sources.iter().all(|s| snippet_ids.contains(s)), || {
        format!("sources {sources:?} not within {snippet_ids:?}")
    })?;

    // Five-question quiz on vectors, all correct.
    let (_, map) = get(&app, "/students/learner/knowledge-map").await;
    let mut states = vec![node_state(&map, "vectors")];
    let (s, quiz) = post(&app, "/quiz/assemble", json!({"student_id": "learner", "topic_id": "vectors", "n": 5})).await;
    ensure(s.as_u16() == 201, || format!("assemble: {s} {}", code(&quiz)))?;
    let session = quiz["session_id"].as_str().unwrap_or_default().to_string();
    let qids: Vec<String> = quiz["questions"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|q| q["question_id"].as_str().map(String::from))
        .collect();
    ensure(qids.len() == 5, || format!("quiz has {} questions", qids.len()))?;
    for qid in &qids {
        let body =
            json!({"student_id": "learner", "session_id": session, "question_id": qid, "given": correct_answer(qid)});
        let (s, ans) = post(&app, "/quiz/answer", body).await;
        ensure(s.is_success() && ans["record"]["correct"] == true, || format!("answer {qid}: {s} {ans}"))?;
        states.push(ans["state_after"].as_str().unwrap_or_default().to_string());
    }
    ensure(states[0] == "Untouched" && states[1] == "Learning", || format!("vectors states {states:?}"))?;
    let (_, map) = get(&app, "/students/learner/knowledge-map").await;
    let vectors_final = node_state(&map, "vectors");
    ensure(vectors_final != "Untouched", || "vectors still untouched".into())?;

    // Three consecutive misses on probability.
    let (_, before) = get(&app, "/students/learner/recommendations?n=5").await;
    let rank_before = before["recommendations"]
        .as_array()
        .and_then(|rs| rs.iter().find(|r| r["topic_id"] == "probability"))
        .map(|r| (r["rank"].as_u64().unwrap_or(0), r["reason"].as_str().unwrap_or("").to_string()));
    let (_, quiz) =
        post(&app, "/quiz/assemble", json!({"student_id": "learner", "topic_id": "probability", "n": 3})).await;
    let session = quiz["session_id"].as_str().unwrap_or_default().to_string();
    let mut last = Value::Null;
    for q in quiz["questions"].as_array().into_iter().flatten() {
        let qid = q["question_id"].as_str().unwrap_or_default();
        let body =
            json!({"student_id": "learner", "session_id": session, "question_id": qid, "given": wrong_answer(qid)});
        let (s, ans) = post(&app, "/quiz/answer", body).await;
        ensure(s.is_success() && ans["record"]["correct"] == false, || format!("miss {qid}: {s} {ans}"))?;
        last = ans;
    }
    let mastery = last["mastery_after"].as_f64().unwrap_or(1.0);
    ensure(last["state_after"] == "Weak" && mastery < 0.40, || format!("probability after misses: {last}"))?;
    let (_, after) = get(&app, "/students/learner/recommendations?n=5").await;
    let top = &after["recommendations"][0];
    ensure(top["topic_id"] == "probability" && top["rank"] == 1 && top["reason"] == "WeakRemediation", || {
        format!("top recommendation {top}")
    })?;
    ensure(rank_before.as_ref().map(|(_, r)| r.as_str()) != Some("WeakRemediation"), || {
        "already weak before misses".into()
    })?;

    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!(
        "sources within snippets; vectors {} -> {vectors_final}; probability weak (mastery {mastery:.4}) and ranked 1 (was {:?}); {elapsed:.2?}",
        states[0], rank_before
    ))
}

fn persistence_round_trip(data_dir: &Path) -> Outcome {
    let store = DataDir::new(data_dir);
    let path = store.student_path("learner").map_err(|e| e.to_string())?;
    let original = std::fs::read(&path).map_err(|e| e.to_string())?;
    let model = store.load_student("learner").map_err(|e| e.to_string())?;
    store.save_student(&model).map_err(|e| e.to_string())?;
    let resaved = std::fs::read(&path).map_err(|e| e.to_string())?;
    ensure(resaved == original, || "student JSON changed across load/save".into())?;

    let comments = ["he said \"hi\"", "commas, everywhere, here", "first line\nsecond line", "\"mixed\", all\nof it"];
    let records: Vec<FeedbackRecord> = comments
        .iter()
        .enumerate()
        .map(|(i, c)| FeedbackRecord {
            at: chrono::Utc.with_ymd_and_hms(2025, 4, 1, 12, 0, i as u32).unwrap(),
            student_id: "learner".into(),
            level: FeedbackLevel::Chat,
            item_id: format!("turn,{i}"),
            rating: 4,
            comment: Some(c.to_string()),
        })
        .collect();
    let csv_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv_store = DataDir::new(csv_dir.path());
    for r in &records {
        csv_store.append_feedback(r).map_err(|e| e.to_string())?;
    }
    let back = csv_store.load_feedback().map_err(|e| e.to_string())?;
    ensure(back == records, || format!("CSV round trip mismatch: {back:?}"))?;
    let raw = std::fs::read_to_string(csv_store.feedback_path()).map_err(|e| e.to_string())?;
    ensure(raw.contains("\"he said \"\"hi\"\"\""), || "quote doubling missing".into())?;

    let events = store.load_trajectory("learner").map_err(|e| e.to_string())?;
    ensure(events == model.trajectory, || "trajectory log differs from student file".into())?;
    let deviation = oracles::replay_deviation(&model, &events);
    ensure(deviation <= 1e-9, || format!("replay deviation {deviation:e}"))?;
    let graded = events.iter().filter(|e| e.correct.is_some()).count();
    Ok(format!(
        "byte-identical resave, {} quoted comments, {graded} graded events replayed ({deviation:.1e})",
        comments.len()
    ))
}

fn main() {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("tokio runtime");
    let loop_dir = tempfile::tempdir().expect("temp dir");

    let results: Vec<(&str, Outcome)> = vec![
        ("bkt oracle equivalence (2^5 sequences, 1e-9, <1s)", bkt_oracle_equivalence()),
        ("bkt hand values (0.57647059 / 0.12727273, 1e-9)", hand_values()),
        ("retrieval top-k vs full sort (50 corpora, <10s)", retrieval_oracle()),
        ("mastery legend (four states, colors)", mastery_legend()),
        ("acceptance means (4.33, 4.22, 2.78, 4.22)", acceptance_aggregation()),
        ("planner safety (500 random DAGs)", planner_safety()),
        ("feedback loop integration (stub LLM, <5s)", runtime.block_on(feedback_loop(loop_dir.path()))),
        ("persistence round trip (bytes, CSV quoting, replay 1e-9)", persistence_round_trip(loop_dir.path())),
    ];

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
