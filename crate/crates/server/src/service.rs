//! Synchronous engine behind the HTTP layer.
//!
//! Each student has a slot (model plus session context) behind its own mutex,
//! so mutations for one student are serialized while different students
//! proceed in parallel. The retrieval index is shared read-only and replaced
//! wholesale on every ingest.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use expertagent_core::corpus::{self, CorpusError, Document, Topic};
use expertagent_core::feedback::{
    aggregate_acceptance, summarize_by_level, AcceptanceCategory, AcceptanceResponse, CategoryAverages, FeedbackError,
    FeedbackLevel, FeedbackRecord, LevelSummary,
};
use expertagent_core::persistence::{validate_student_id, CourseConfig, DataDir, PersistenceError};
use expertagent_core::planner::{
    adjust_difficulty, learning_advice, recommend_next, AdviceEntry, DifficultyLevel, PrerequisiteGraph, Recommendation,
};
use expertagent_core::quiz::{
    assemble_quiz, review_session, AnswerRecord, QuestionKind, QuizError, QuizSession, ReviewReport, SessionMeta,
    DEFAULT_QUIZ_LENGTH,
};
use expertagent_core::retrieval::{build_index, RetrievalError, RetrievalIndex, RetrievedSnippet, DEFAULT_TOP_K};
use expertagent_core::student_model::{
    classify_state, init_student, knowledge_map, BktParams, EventKind, KnowledgeMap, MasteryState, StudentError,
    StudentModel, TopicState,
};
use expertagent_core::tutor::{
    answer_chat, generate_lesson, ChatRole, ChatTurn, ContentType, LessonContent, LlmClient, TutorError,
};

pub const DEFAULT_RECOMMENDATIONS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown student `{0}`")]
    UnknownStudent(String),
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("unknown quiz session `{0}`")]
    UnknownSession(String),
    #[error("question `{0}` is not part of this session")]
    UnknownQuestion(String),
    #[error("student `{0}` already exists")]
    DuplicateStudent(String),
    #[error("question `{0}` was already answered")]
    AlreadyAnswered(String),
    #[error("question is empty")]
    EmptyQuestion,
    #[error("{0}")]
    InvalidOption(String),
    #[error("no questions for topic `{0}`")]
    NoQuestionsForTopic(String),
    #[error("{0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{0}")]
    ClientFailure(String),
    #[error("language model response could not be parsed: {0}")]
    UnparseableResponse(String),
    #[error(transparent)]
    Storage(PersistenceError),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    /// Stable machine-readable code for error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Self::UnknownStudent(_) => "UnknownStudent",
            Self::UnknownTopic(_) => "UnknownTopic",
            Self::UnknownSession(_) => "UnknownSession",
            Self::UnknownQuestion(_) => "UnknownQuestion",
            Self::DuplicateStudent(_) => "DuplicateStudent",
            Self::AlreadyAnswered(_) => "AlreadyAnswered",
            Self::EmptyQuestion => "EmptyQuestion",
            Self::InvalidOption(_) => "InvalidOption",
            Self::NoQuestionsForTopic(_) => "NoQuestionsForTopic",
            Self::InvalidRequest(_) => "InvalidRequest",
            Self::Corpus(CorpusError::UnsupportedFormat(_)) => "UnsupportedFormat",
            Self::Corpus(CorpusError::EmptyDocument) => "EmptyDocument",
            Self::Corpus(CorpusError::InvalidEncoding(_)) => "InvalidEncoding",
            Self::Corpus(CorpusError::NoTopicsFound) => "NoTopicsFound",
            Self::ClientFailure(_) => "ClientFailure",
            Self::UnparseableResponse(_) => "UnparseableResponse",
            Self::Storage(PersistenceError::CorruptRecord { .. }) => "CorruptRecord",
            Self::Storage(_) => "IoFailure",
            Self::Internal(_) => "Internal",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            Self::UnknownStudent(_) | Self::UnknownTopic(_) | Self::UnknownSession(_) | Self::UnknownQuestion(_) => 404,
            Self::DuplicateStudent(_) | Self::AlreadyAnswered(_) => 409,
            Self::EmptyQuestion
            | Self::InvalidOption(_)
            | Self::NoQuestionsForTopic(_)
            | Self::InvalidRequest(_)
            | Self::Corpus(_) => 400,
            Self::ClientFailure(_) | Self::UnparseableResponse(_) => 502,
            Self::Storage(_) | Self::Internal(_) => 500,
        }
    }
}

impl From<PersistenceError> for ServiceError {
    fn from(e: PersistenceError) -> Self {
        match e {
            PersistenceError::InvalidStudentId(id) => Self::InvalidRequest(format!("invalid student id `{id}`")),
            PersistenceError::Invalid(f) => f.into(),
            other => Self::Storage(other),
        }
    }
}

impl From<FeedbackError> for ServiceError {
    fn from(e: FeedbackError) -> Self {
        Self::InvalidRequest(e.to_string())
    }
}

impl From<TutorError> for ServiceError {
    fn from(e: TutorError) -> Self {
        match e {
            TutorError::EmptyQuestion => Self::EmptyQuestion,
            TutorError::Client(f) => Self::ClientFailure(f.to_string()),
            other => Self::UnparseableResponse(other.to_string()),
        }
    }
}

impl From<QuizError> for ServiceError {
    fn from(e: QuizError) -> Self {
        match e {
            QuizError::UnknownQuestion(q) => Self::UnknownQuestion(q),
            QuizError::AlreadyAnswered(q) => Self::AlreadyAnswered(q),
            QuizError::NoQuestionsForTopic(t) => Self::NoQuestionsForTopic(t),
            e @ QuizError::InvalidOption { .. } => Self::InvalidOption(e.to_string()),
            other => Self::InvalidRequest(other.to_string()),
        }
    }
}

impl From<StudentError> for ServiceError {
    fn from(e: StudentError) -> Self {
        match e {
            StudentError::UnknownTopic(t) => Self::UnknownTopic(t),
            other => Self::Internal(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, ServiceError>;

/// Per-student conversational and quiz state. Lives in memory only.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SessionContext {
    pub student_id: String,
    pub course_id: String,
    pub chat_history: Vec<ChatTurn>,
    pub active_quiz: Option<QuizSession>,
    pub current_difficulty: BTreeMap<String, DifficultyLevel>,
}

#[derive(Debug)]
struct StudentSlot {
    model: StudentModel,
    ctx: SessionContext,
}

type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Debug, Clone, Serialize)]
pub struct DocumentSummary {
    pub doc_id: String,
    pub title: String,
    pub chunk_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub document: DocumentSummary,
    pub topics: Vec<Topic>,
    pub index_size: usize,
    pub skipped_chunks: usize,
    /// False when identical bytes were already in the corpus.
    pub new_document: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TopicsView {
    pub course_id: String,
    /// Course topics with the ids of ingested documents that cover them.
    pub topics: Vec<Topic>,
    /// Topics extracted from documents that the course does not define.
    pub discovered: Vec<Topic>,
    pub documents: Vec<DocumentSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TopicStateView {
    pub topic_id: String,
    pub mastery: f64,
    pub attempts: u32,
    pub state: MasteryState,
}

impl From<&TopicState> for TopicStateView {
    fn from(ts: &TopicState) -> Self {
        Self { topic_id: ts.topic_id.clone(), mastery: ts.mastery, attempts: ts.attempts, state: classify_state(ts) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StudentView {
    pub student_id: String,
    pub topic_states: Vec<TopicStateView>,
    pub trajectory_len: usize,
}

impl From<&StudentModel> for StudentView {
    fn from(m: &StudentModel) -> Self {
        Self {
            student_id: m.student_id.clone(),
            topic_states: m.topic_states.values().map(TopicStateView::from).collect(),
            trajectory_len: m.trajectory.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatResponse {
    pub answer: ChatTurn,
    pub snippets: Vec<RetrievedSnippet>,
    pub ungrounded: bool,
    pub dropped_sources: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LessonResponse {
    pub lesson: LessonContent,
    pub snippets: Vec<RetrievedSnippet>,
    pub dropped_sources: usize,
}

/// A question as shown to the student: no answer key, no explanation.
#[derive(Debug, Clone, Serialize)]
pub struct QuizQuestionView {
    pub question_id: String,
    pub topic_id: String,
    pub difficulty: DifficultyLevel,
    pub kind: QuestionKind,
    pub stem: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuizView {
    pub session_id: String,
    pub student_id: String,
    pub topic_id: String,
    pub level: DifficultyLevel,
    pub questions: Vec<QuizQuestionView>,
    pub started_at: DateTime<Utc>,
}

impl From<&QuizSession> for QuizView {
    fn from(s: &QuizSession) -> Self {
        Self {
            session_id: s.session_id.clone(),
            student_id: s.student_id.clone(),
            topic_id: s.topic_id.clone(),
            level: s.level,
            questions: s
                .questions
                .iter()
                .map(|q| QuizQuestionView {
                    question_id: q.question_id.clone(),
                    topic_id: q.topic_id.clone(),
                    difficulty: q.difficulty,
                    kind: q.kind,
                    stem: q.stem.clone(),
                    options: q.options.clone(),
                })
                .collect(),
            started_at: s.started_at,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnswerResponse {
    pub record: AnswerRecord,
    pub mastery_after: f64,
    pub state_after: MasteryState,
    pub explanation: String,
    pub next_difficulty: DifficultyLevel,
    pub quiz_complete: bool,
    pub recommendations: Vec<Recommendation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReviewResponse {
    pub report: ReviewReport,
    pub advice: Vec<AdviceEntry>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FeedbackInput {
    pub student_id: String,
    pub level: FeedbackLevel,
    pub item_id: String,
    pub rating: i64,
    #[serde(default)]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct AcceptanceInput {
    pub respondent_id: String,
    pub category: AcceptanceCategory,
    pub rating: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Ack {
    pub ordinal: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeedbackSummary {
    pub total: u64,
    pub levels: BTreeMap<FeedbackLevel, LevelSummary>,
}

pub struct Service {
    store: DataDir,
    course: CourseConfig,
    graph: PrerequisiteGraph,
    params: BktParams,
    client: Arc<dyn LlmClient>,
    clock: Clock,
    documents: Mutex<BTreeMap<String, Document>>,
    index: RwLock<Option<Arc<RetrievalIndex>>>,
    students: Mutex<HashMap<String, Arc<Mutex<StudentSlot>>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Service {
    /// Builds a service over `store`, indexing any documents already stored there.
    pub fn new(store: DataDir, course: CourseConfig, client: Arc<dyn LlmClient>) -> Result<Self> {
        course.validate()?;
        let graph = course.graph().map_err(|e| ServiceError::Internal(e.to_string()))?;
        let docs = store.load_documents()?;
        let svc = Self {
            store,
            graph,
            course,
            params: BktParams::default(),
            client,
            clock: Arc::new(Utc::now),
            documents: Mutex::new(docs.into_iter().map(|d| (d.doc_id.clone(), d)).collect()),
            index: RwLock::new(None),
            students: Mutex::new(HashMap::new()),
        };
        svc.rebuild_index(&lock(&svc.documents))?;
        Ok(svc)
    }

    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn course(&self) -> &CourseConfig {
        &self.course
    }

    pub fn store(&self) -> &DataDir {
        &self.store
    }

    pub fn llm_mode(&self) -> expertagent_core::tutor::LlmMode {
        self.client.mode()
    }

    fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    fn current_index(&self) -> Option<Arc<RetrievalIndex>> {
        self.index.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn rebuild_index(&self, docs: &BTreeMap<String, Document>) -> Result<(usize, usize)> {
        let chunks: Vec<_> = docs.values().flat_map(corpus::segment).collect();
        let built = match build_index(&chunks) {
            Ok(idx) => Some(Arc::new(idx)),
            Err(RetrievalError::EmptyIndex) => None,
            Err(e) => return Err(ServiceError::Internal(e.to_string())),
        };
        let sizes = built.as_ref().map_or((0, chunks.len()), |i| (i.len(), i.skipped_count()));
        *self.index.write().unwrap_or_else(|p| p.into_inner()) = built;
        Ok(sizes)
    }

    fn retrieve(&self, query: &str, k: usize) -> Vec<RetrievedSnippet> {
        match self.current_index() {
            Some(idx) => idx.retrieve(query, k).unwrap_or_default(),
            None => Vec::new(),
        }
    }

    /// Ingests one file, persists it under the corpus store and swaps in a rebuilt index.
    pub fn ingest(&self, filename: &str, raw: &[u8]) -> Result<IngestReport> {
        let doc = corpus::ingest_document_at(raw, filename, self.now())?;
        let topics = corpus::extract_topics(&doc).unwrap_or_default();
        let chunk_count = corpus::segment(&doc).len();
        let mut docs = lock(&self.documents);
        let new_document = !docs.contains_key(&doc.doc_id);
        if new_document {
            self.store.save_document(&doc)?;
            docs.insert(doc.doc_id.clone(), doc.clone());
        }
        let (index_size, skipped_chunks) = self.rebuild_index(&docs)?;
        let stored = &docs[&doc.doc_id];
        Ok(IngestReport {
            document: DocumentSummary { doc_id: stored.doc_id.clone(), title: stored.title.clone(), chunk_count },
            topics,
            index_size,
            skipped_chunks,
            new_document,
        })
    }

    /// Ingests the course's own document list, resolved against `course_path`.
    pub fn ingest_course_documents(&self, course_path: &Path) -> Result<Vec<IngestReport>> {
        expertagent_core::persistence::resolve_document_paths(&self.course, course_path)
            .into_iter()
            .map(|p| {
                let raw = std::fs::read(&p)
                    .map_err(|e| ServiceError::InvalidRequest(format!("cannot read {}: {e}", p.display())))?;
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
                self.ingest(&name, &raw)
            })
            .collect()
    }

    pub fn topics(&self) -> TopicsView {
        let docs = lock(&self.documents);
        let mut covered: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut discovered: BTreeMap<String, Topic> = BTreeMap::new();
        for doc in docs.values() {
            for t in corpus::extract_topics(doc).unwrap_or_default() {
                covered.entry(t.topic_id.clone()).or_default().insert(doc.doc_id.clone());
                if self.course.topic(&t.topic_id).is_none() {
                    let entry =
                        discovered.entry(t.topic_id.clone()).or_insert_with(|| Topic { source_doc_ids: vec![], ..t });
                    entry.source_doc_ids.push(doc.doc_id.clone());
                }
            }
        }
        let topics = self
            .course
            .topics
            .iter()
            .map(|t| {
                let mut ids: BTreeSet<String> = t.source_doc_ids.iter().cloned().collect();
                ids.extend(covered.get(&t.topic_id).into_iter().flatten().cloned());
                Topic { source_doc_ids: ids.into_iter().collect(), ..t.clone() }
            })
            .collect();
        let documents = docs
            .values()
            .map(|d| DocumentSummary {
                doc_id: d.doc_id.clone(),
                title: d.title.clone(),
                chunk_count: corpus::segment(d).len(),
            })
            .collect();
        TopicsView {
            course_id: self.course.course_id.clone(),
            topics,
            discovered: discovered.into_values().collect(),
            documents,
        }
    }

    fn fresh_context(&self, student_id: &str) -> SessionContext {
        SessionContext {
            student_id: student_id.to_string(),
            course_id: self.course.course_id.clone(),
            ..Default::default()
        }
    }

    pub fn create_student(&self, student_id: &str) -> Result<StudentView> {
        validate_student_id(student_id)?;
        let mut slots = lock(&self.students);
        if slots.contains_key(student_id) || self.store.student_exists(student_id) {
            return Err(ServiceError::DuplicateStudent(student_id.to_string()));
        }
        let model = init_student(student_id, &self.course.topics, self.params)?;
        self.store.save_student(&model)?;
        let view = StudentView::from(&model);
        slots.insert(
            student_id.to_string(),
            Arc::new(Mutex::new(StudentSlot { model, ctx: self.fresh_context(student_id) })),
        );
        Ok(view)
    }

    fn slot(&self, student_id: &str) -> Result<Arc<Mutex<StudentSlot>>> {
        validate_student_id(student_id).map_err(|_| ServiceError::UnknownStudent(student_id.to_string()))?;
        let mut slots = lock(&self.students);
        if let Some(s) = slots.get(student_id) {
            return Ok(s.clone());
        }
        let mut model = match self.store.load_student(student_id) {
            Ok(m) => m,
            Err(PersistenceError::NotFound(_)) => return Err(ServiceError::UnknownStudent(student_id.to_string())),
            Err(e) => return Err(e.into()),
        };
        // Topics added to the course after the student was created start fresh.
        for t in &self.course.topics {
            model
                .topic_states
                .entry(t.topic_id.clone())
                .or_insert_with(|| TopicState::fresh(&t.topic_id, model.params.p_init));
        }
        let slot = Arc::new(Mutex::new(StudentSlot { model, ctx: self.fresh_context(student_id) }));
        slots.insert(student_id.to_string(), slot.clone());
        Ok(slot)
    }

    /// Persists `next` (trajectory line first, then the student file) and
    /// only then installs it, so a failure leaves the slot unchanged.
    fn commit(&self, slot: &mut StudentSlot, next: StudentModel) -> Result<()> {
        for ev in &next.trajectory[slot.model.trajectory.len()..] {
            self.store.append_trajectory(&next.student_id, ev)?;
        }
        self.store.save_student(&next)?;
        slot.model = next;
        Ok(())
    }

    fn topic(&self, topic_id: &str) -> Result<&Topic> {
        self.course.topic(topic_id).ok_or_else(|| ServiceError::UnknownTopic(topic_id.to_string()))
    }

    pub fn student(&self, student_id: &str) -> Result<StudentView> {
        let slot = self.slot(student_id)?;
        let guard = lock(&slot);
        Ok(StudentView::from(&guard.model))
    }

    pub fn export_student(&self, student_id: &str) -> Result<StudentModel> {
        let slot = self.slot(student_id)?;
        let guard = lock(&slot);
        Ok(guard.model.clone())
    }

    pub fn chat(&self, student_id: &str, question: &str, topic_id: Option<&str>) -> Result<ChatResponse> {
        let slot = self.slot(student_id)?;
        if question.trim().is_empty() {
            return Err(ServiceError::EmptyQuestion);
        }
        if let Some(t) = topic_id {
            self.topic(t)?;
        }
        let mut guard = lock(&slot);
        let snippets = self.retrieve(question, DEFAULT_TOP_K);
        let at = guard.model.next_timestamp(self.now());
        let answer = answer_chat(question, &snippets, &guard.ctx.chat_history, self.client.as_ref(), at)?;

        let mut next = guard.model.clone();
        next.record_interaction(EventKind::ChatInteraction, topic_id.unwrap_or(""), at)?;
        self.commit(&mut guard, next)?;
        guard.ctx.chat_history.push(ChatTurn {
            role: ChatRole::Student,
            text: question.to_string(),
            sources: vec![],
            at,
        });
        guard.ctx.chat_history.push(answer.turn.clone());
        Ok(ChatResponse {
            answer: answer.turn,
            snippets,
            ungrounded: answer.ungrounded,
            dropped_sources: answer.dropped_sources,
        })
    }

    pub fn lesson(&self, student_id: &str, topic_id: &str, content_type: ContentType) -> Result<LessonResponse> {
        let slot = self.slot(student_id)?;
        let topic = self.topic(topic_id)?;
        let mut guard = lock(&slot);
        let snippets = self.retrieve(&topic.label, DEFAULT_TOP_K);
        let parsed = generate_lesson(topic, content_type, &snippets, self.client.as_ref())?;

        let mut next = guard.model.clone();
        let at = next.next_timestamp(self.now());
        next.record_interaction(EventKind::LessonViewed, topic_id, at)?;
        self.commit(&mut guard, next)?;
        Ok(LessonResponse { lesson: parsed.lesson, snippets, dropped_sources: parsed.dropped_sources })
    }

    /// Starts a quiz, replacing any quiz still active for the student.
    pub fn assemble_quiz(
        &self,
        student_id: &str,
        topic_id: &str,
        n: Option<usize>,
        level: Option<DifficultyLevel>,
    ) -> Result<QuizView> {
        let slot = self.slot(student_id)?;
        self.topic(topic_id)?;
        let mut guard = lock(&slot);
        let level = level.unwrap_or_else(|| guard.ctx.current_difficulty.get(topic_id).copied().unwrap_or_default());
        let meta = SessionMeta {
            session_id: uuid::Uuid::new_v4().to_string(),
            student_id: student_id.to_string(),
            started_at: guard.model.next_timestamp(self.now()),
        };
        let session =
            assemble_quiz(&self.course.question_bank, topic_id, n.unwrap_or(DEFAULT_QUIZ_LENGTH), level, meta)?;
        let view = QuizView::from(&session);
        guard.ctx.current_difficulty.insert(topic_id.to_string(), level);
        guard.ctx.active_quiz = Some(session);
        Ok(view)
    }

    pub fn answer_quiz(
        &self,
        student_id: &str,
        session_id: &str,
        question_id: &str,
        given: &str,
    ) -> Result<AnswerResponse> {
        let slot = self.slot(student_id)?;
        let mut guard = lock(&slot);
        let session = guard
            .ctx
            .active_quiz
            .as_ref()
            .filter(|s| s.session_id == session_id)
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))?;
        let at = guard.model.next_timestamp(self.now()).max(session.started_at);
        let record = session.grade(question_id, given, at)?;
        let question = session.question(question_id)?.clone();

        let mut next = guard.model.clone();
        let ts = next.record_outcome(&question.topic_id, record.correct, at)?.clone();
        let state_after = classify_state(&ts);
        let current = guard.ctx.current_difficulty.get(&question.topic_id).copied().unwrap_or_default();
        let next_difficulty = adjust_difficulty(&ts, current);
        self.commit(&mut guard, next)?;

        let ctx = &mut guard.ctx;
        let session = ctx.active_quiz.as_mut().expect("checked above");
        session.submit(question_id, given, at)?;
        let quiz_complete = session.is_complete();
        ctx.current_difficulty.insert(question.topic_id.clone(), next_difficulty);
        let recommendations = recommend_next(&guard.model, &self.graph, DEFAULT_RECOMMENDATIONS);
        Ok(AnswerResponse {
            record,
            mastery_after: ts.mastery,
            state_after,
            explanation: question.explanation,
            next_difficulty,
            quiz_complete,
            recommendations,
        })
    }

    pub fn review(&self, student_id: &str) -> Result<ReviewResponse> {
        let slot = self.slot(student_id)?;
        let guard = lock(&slot);
        let session = guard
            .ctx
            .active_quiz
            .as_ref()
            .ok_or_else(|| ServiceError::UnknownSession("no quiz for this student".to_string()))?;
        let report = review_session(session)?;
        let index = self.current_index();
        let advice = learning_advice(&report, index.as_deref(), &self.course.topics);
        Ok(ReviewResponse { report, advice })
    }

    pub fn knowledge_map(&self, student_id: &str) -> Result<KnowledgeMap> {
        let slot = self.slot(student_id)?;
        let guard = lock(&slot);
        Ok(knowledge_map(&guard.model, &self.graph, &self.course.topics)?)
    }

    pub fn recommendations(&self, student_id: &str, n: Option<usize>) -> Result<Vec<Recommendation>> {
        let slot = self.slot(student_id)?;
        let n = n.unwrap_or(DEFAULT_RECOMMENDATIONS);
        if n == 0 {
            return Err(ServiceError::InvalidRequest("n must be at least 1".into()));
        }
        let guard = lock(&slot);
        Ok(recommend_next(&guard.model, &self.graph, n))
    }

    pub fn submit_feedback(&self, input: FeedbackInput) -> Result<Ack> {
        let rating = expertagent_core::feedback::check_rating(input.rating)?;
        let rec = FeedbackRecord {
            at: self.now(),
            student_id: input.student_id,
            level: input.level,
            item_id: input.item_id,
            rating,
            comment: input.comment.filter(|c| !c.is_empty()),
        };
        let ordinal = expertagent_core::feedback::record_feedback(&self.store, &rec)?;
        Ok(Ack { ordinal })
    }

    pub fn submit_acceptance(&self, input: AcceptanceInput) -> Result<Ack> {
        let rating = expertagent_core::feedback::check_rating(input.rating)?;
        let resp = AcceptanceResponse { respondent_id: input.respondent_id, category: input.category, rating };
        Ok(Ack { ordinal: self.store.append_acceptance(&resp)? })
    }

    pub fn feedback_summary(&self) -> Result<FeedbackSummary> {
        let records = self.store.load_feedback()?;
        Ok(FeedbackSummary { total: records.len() as u64, levels: summarize_by_level(&records) })
    }

    pub fn acceptance_summary(&self) -> Result<CategoryAverages> {
        Ok(aggregate_acceptance(&self.store.load_acceptance()?))
    }
}
