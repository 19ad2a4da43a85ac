//! Core engine for a retrieval-grounded adaptive tutor.
//!
//! Documents are ingested and chunked ([`corpus`]), indexed for similarity
//! search ([`retrieval`]), and used to ground lessons and chat answers
//! ([`tutor`]). Exercise outcomes update a per-topic knowledge-tracing model
//! ([`student_model`]) that drives recommendations and difficulty
//! ([`planner`]) and quiz assembly ([`quiz`]). Ratings are aggregated in
//! [`feedback`]; everything durable lives under one directory ([`persistence`]).

pub mod corpus;
pub mod feedback;
pub mod persistence;
pub mod planner;
pub mod quiz;
pub mod retrieval;
pub mod student_model;
pub mod text;
pub mod tutor;
