#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chrono::{DateTime, Duration, TimeZone, Utc};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use expertagent::api::router;
use expertagent::Service;
use expertagent_core::persistence::{load_course, DataDir};
use expertagent_core::tutor::StubClient;

pub fn course_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/course/course.json")
}

/// A clock that advances one second per reading, starting at a fixed instant.
pub fn ticking_clock() -> impl Fn() -> DateTime<Utc> + Send + Sync + 'static {
    let start = Utc.with_ymd_and_hms(2025, 2, 3, 10, 0, 0).unwrap();
    let ticks = std::sync::atomic::AtomicI64::new(0);
    move || start + Duration::seconds(ticks.fetch_add(1, std::sync::atomic::Ordering::Relaxed))
}

/// Stub-mode service over a fresh data dir, with the fixture documents ingested.
pub fn service(data_dir: &Path) -> Arc<Service> {
    let course = load_course(&course_path()).unwrap();
    let svc = Service::new(DataDir::new(data_dir), course, Arc::new(StubClient)).unwrap().with_clock(ticking_clock());
    svc.ingest_course_documents(&course_path()).unwrap();
    Arc::new(svc)
}

pub fn app(data_dir: &Path) -> (Router, Arc<Service>) {
    let svc = service(data_dir);
    (router(svc.clone()), svc)
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => builder.header("content-type", "application/json").body(Body::from(v.to_string())).unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let json =
        serde_json::from_slice(&bytes).unwrap_or_else(|_| panic!("non-JSON body: {}", String::from_utf8_lossy(&bytes)));
    (status, json)
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body)).await
}

/// Snapshot of every file under `dir` (relative path and bytes), sorted.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Correct answer for a fixture question, as the API expects it.
pub fn correct_answer(question_id: &str) -> String {
    let course = load_course(&course_path()).unwrap();
    let q = course.question_bank.iter().find(|q| q.question_id == question_id).unwrap();
    match &q.answer_key {
        expertagent_core::quiz::AnswerKey::Index(i) => i.to_string(),
        expertagent_core::quiz::AnswerKey::Text(t) => t.clone(),
    }
}

/// A wrong but well-formed answer for a fixture question.
pub fn wrong_answer(question_id: &str) -> String {
    let course = load_course(&course_path()).unwrap();
    let q = course.question_bank.iter().find(|q| q.question_id == question_id).unwrap();
    match &q.answer_key {
        expertagent_core::quiz::AnswerKey::Index(i) => ((i + 1) % q.options.len()).to_string(),
        expertagent_core::quiz::AnswerKey::Text(_) => "not the answer".to_string(),
    }
}
