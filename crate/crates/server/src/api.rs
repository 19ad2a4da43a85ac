//! JSON-over-HTTP binding of [`Service`].
//!
//! Every body, success or error, carries a `request_id`; errors look like
//! `{"request_id": ..., "error": {"code": ..., "message": ...}}`.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use expertagent_core::planner::DifficultyLevel;
use expertagent_core::tutor::ContentType;

use crate::service::{AcceptanceInput, FeedbackInput, Service, ServiceError};

pub const REQUEST_ID_HEADER: &str = "x-request-id";

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/documents", post(post_document))
        .route("/topics", get(get_topics))
        .route("/students", post(post_student))
        .route("/chat", post(post_chat))
        .route("/lesson", get(get_lesson))
        .route("/quiz/assemble", post(post_quiz_assemble))
        .route("/quiz/answer", post(post_quiz_answer))
        .route("/quiz/review", get(get_quiz_review))
        .route("/students/{id}/knowledge-map", get(get_knowledge_map))
        .route("/students/{id}/recommendations", get(get_recommendations))
        .route("/feedback", post(post_feedback))
        .route("/acceptance", post(post_acceptance))
        .route("/feedback/summary", get(get_feedback_summary))
        .route("/acceptance/summary", get(get_acceptance_summary))
        .fallback(no_route)
        .with_state(service)
}

fn new_request_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

fn reply(status: StatusCode, request_id: String, body: Value) -> Response {
    let mut body = match body {
        Value::Object(map) => Value::Object(map),
        other => json!({ "data": other }),
    };
    body["request_id"] = Value::String(request_id.clone());
    let mut resp = (status, Json(body)).into_response();
    if let Ok(v) = HeaderValue::from_str(&request_id) {
        resp.headers_mut().insert(REQUEST_ID_HEADER, v);
    }
    resp
}

fn error_reply(request_id: String, err: &ServiceError) -> Response {
    let status = StatusCode::from_u16(err.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    if status.is_server_error() {
        tracing::error!(%request_id, code = err.code(), "{err}");
    } else {
        tracing::debug!(%request_id, code = err.code(), "{err}");
    }
    reply(status, request_id, json!({ "error": { "code": err.code(), "message": err.to_string() } }))
}

async fn no_route(uri: axum::http::Uri) -> Response {
    let request_id = new_request_id();
    reply(
        StatusCode::NOT_FOUND,
        request_id,
        json!({ "error": { "code": "NotFound", "message": format!("no route for {}", uri.path()) } }),
    )
}

fn bad_request(message: String) -> Response {
    error_reply(new_request_id(), &ServiceError::InvalidRequest(message))
}

/// Runs a blocking service call off the async executor.
async fn run<T, F>(status: StatusCode, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
{
    let request_id = new_request_id();
    let outcome = tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ServiceError::Internal(format!("worker failed: {e}"))));
    match outcome.and_then(|v| serde_json::to_value(v).map_err(|e| ServiceError::Internal(e.to_string()))) {
        Ok(body) => reply(status, request_id, body),
        Err(e) => error_reply(request_id, &e),
    }
}

macro_rules! body {
    ($payload:expr) => {
        match $payload {
            Ok(Json(v)) => v,
            Err(rej) => return bad_request(rej.body_text()),
        }
    };
}

#[derive(Deserialize)]
struct DocumentBody {
    filename: String,
    content: String,
}

async fn post_document(
    State(svc): State<Arc<Service>>,
    payload: Result<Json<DocumentBody>, JsonRejection>,
) -> Response {
    let b = body!(payload);
    run(StatusCode::CREATED, move || svc.ingest(&b.filename, b.content.as_bytes())).await
}

async fn get_topics(State(svc): State<Arc<Service>>) -> Response {
    run(StatusCode::OK, move || Ok(svc.topics())).await
}

#[derive(Deserialize)]
struct StudentBody {
    student_id: String,
}

async fn post_student(State(svc): State<Arc<Service>>, payload: Result<Json<StudentBody>, JsonRejection>) -> Response {
    let b = body!(payload);
    run(StatusCode::CREATED, move || svc.create_student(&b.student_id)).await
}

#[derive(Deserialize)]
struct ChatBody {
    student_id: String,
    question: String,
    #[serde(default)]
    topic_id: Option<String>,
}

async fn post_chat(State(svc): State<Arc<Service>>, payload: Result<Json<ChatBody>, JsonRejection>) -> Response {
    let b = body!(payload);
    run(StatusCode::OK, move || svc.chat(&b.student_id, &b.question, b.topic_id.as_deref())).await
}

#[derive(Deserialize)]
struct LessonQuery {
    student: String,
    topic: String,
    #[serde(default)]
    content_type: Option<String>,
}

async fn get_lesson(State(svc): State<Arc<Service>>, query: Result<Query<LessonQuery>, QueryRejection>) -> Response {
    let q = match query {
        Ok(Query(q)) => q,
        Err(rej) => return bad_request(rej.body_text()),
    };
    let content_type = match q.content_type.as_deref().map(str::parse::<ContentType>) {
        None => ContentType::BriefSummary,
        Some(Ok(ct)) => ct,
        Some(Err(e)) => return bad_request(e),
    };
    run(StatusCode::OK, move || svc.lesson(&q.student, &q.topic, content_type)).await
}

#[derive(Deserialize)]
struct AssembleBody {
    student_id: String,
    topic_id: String,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    level: Option<DifficultyLevel>,
}

async fn post_quiz_assemble(
    State(svc): State<Arc<Service>>,
    payload: Result<Json<AssembleBody>, JsonRejection>,
) -> Response {
    let b = body!(payload);
    run(StatusCode::CREATED, move || svc.assemble_quiz(&b.student_id, &b.topic_id, b.n, b.level)).await
}

#[derive(Deserialize)]
struct AnswerBody {
    student_id: String,
    session_id: String,
    question_id: String,
    given: Value,
}

async fn post_quiz_answer(
    State(svc): State<Arc<Service>>,
    payload: Result<Json<AnswerBody>, JsonRejection>,
) -> Response {
    let b = body!(payload);
    // Option indices may arrive as JSON numbers.
    let given = match b.given {
        Value::String(s) => s,
        Value::Number(n) => n.to_string(),
        other => return bad_request(format!("`given` must be a string or number, got {other}")),
    };
    run(StatusCode::OK, move || svc.answer_quiz(&b.student_id, &b.session_id, &b.question_id, &given)).await
}

#[derive(Deserialize)]
struct StudentQuery {
    student: String,
}

async fn get_quiz_review(
    State(svc): State<Arc<Service>>,
    query: Result<Query<StudentQuery>, QueryRejection>,
) -> Response {
    let q = match query {
        Ok(Query(q)) => q,
        Err(rej) => return bad_request(rej.body_text()),
    };
    run(StatusCode::OK, move || svc.review(&q.student)).await
}

async fn get_knowledge_map(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Response {
    run(StatusCode::OK, move || svc.knowledge_map(&id)).await
}

#[derive(Deserialize)]
struct RecommendationQuery {
    #[serde(default)]
    n: Option<usize>,
}

async fn get_recommendations(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    query: Result<Query<RecommendationQuery>, QueryRejection>,
) -> Response {
    let q = match query {
        Ok(Query(q)) => q,
        Err(rej) => return bad_request(rej.body_text()),
    };
    run(StatusCode::OK, move || {
        svc.recommendations(&id, q.n).map(|r| json!({ "student_id": id, "recommendations": r }))
    })
    .await
}

async fn post_feedback(
    State(svc): State<Arc<Service>>,
    payload: Result<Json<FeedbackInput>, JsonRejection>,
) -> Response {
    let b = body!(payload);
    run(StatusCode::CREATED, move || svc.submit_feedback(b)).await
}

async fn post_acceptance(
    State(svc): State<Arc<Service>>,
    payload: Result<Json<AcceptanceInput>, JsonRejection>,
) -> Response {
    let b = body!(payload);
    run(StatusCode::CREATED, move || svc.submit_acceptance(b)).await
}

async fn get_feedback_summary(State(svc): State<Arc<Service>>) -> Response {
    run(StatusCode::OK, move || svc.feedback_summary()).await
}

async fn get_acceptance_summary(State(svc): State<Arc<Service>>) -> Response {
    run(StatusCode::OK, move || svc.acceptance_summary()).await
}
