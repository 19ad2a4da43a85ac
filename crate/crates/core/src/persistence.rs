//! File-backed storage under a single data directory:
//!
//! ```text
//! <root>/course.json
//! <root>/students/<student_id>.json      atomic rewrite (temp file + rename)
//! <root>/trajectory/<student_id>.jsonl   append-only, one event per line
//! <root>/feedback.csv                    append-only
//! <root>/acceptance.csv                  append-only
//! <root>/corpus/<doc_id>.json            ingested documents
//! ```
//!
//! Student files are canonical: fixed key order, topic states sorted by id,
//! so save -> load -> save is byte-identical.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, Topic};
use crate::feedback::{AcceptanceResponse, FeedbackError, FeedbackLevel, FeedbackRecord};
use crate::planner::{GraphError, PrerequisiteGraph};
use crate::quiz::Question;
use crate::student_model::{BktParams, StudentModel, TopicState, TrajectoryEvent};

pub const DATA_DIR_ENV: &str = "EXPERTAGENT_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "./data";

pub const COURSE_FILE: &str = "course.json";
pub const STUDENTS_DIR: &str = "students";
pub const TRAJECTORY_DIR: &str = "trajectory";
pub const FEEDBACK_FILE: &str = "feedback.csv";
pub const ACCEPTANCE_FILE: &str = "acceptance.csv";
pub const CORPUS_DIR: &str = "corpus";

pub const FEEDBACK_HEADER: &str = "timestamp,student_id,level,item_id,rating,comment";
pub const ACCEPTANCE_HEADER: &str = "respondent_id,category,rating";

#[derive(Debug, Error)]
pub enum PersistenceError {
    #[error("i/o failure on {path}: {source}")]
    IoFailure { path: PathBuf, source: io::Error },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("corrupt record at `{field}`: {detail}")]
    CorruptRecord { field: String, detail: String },
    #[error("cyclic prerequisites: {}", .0.join(" -> "))]
    CyclicPrerequisites(Vec<String>),
    #[error("invalid student id `{0}` (use letters, digits, '-' or '_')")]
    InvalidStudentId(String),
    #[error(transparent)]
    Invalid(#[from] FeedbackError),
}

impl PersistenceError {
    fn io(path: &Path, source: io::Error) -> Self {
        Self::IoFailure { path: path.to_path_buf(), source }
    }

    fn corrupt(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Self::CorruptRecord { field: field.into(), detail: detail.into() }
    }

    /// Field name for `CorruptRecord`, `None` otherwise.
    pub fn corrupt_field(&self) -> Option<&str> {
        match self {
            Self::CorruptRecord { field, .. } => Some(field),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, PersistenceError>;

/// Ids double as file names, so keep them to a safe alphabet.
pub fn validate_student_id(id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(PersistenceError::InvalidStudentId(id.to_string()))
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to a sibling temp file, syncs it, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| PersistenceError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.tmp-{}-{}", std::process::id(), TMP_COUNTER.fetch_add(1, Ordering::Relaxed)));
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(PersistenceError::io(path, e));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct StudentFile {
    student_id: String,
    params: BktParams,
    topic_states: Vec<TopicState>,
    trajectory: Vec<TrajectoryEvent>,
}

/// Canonical JSON for a student model.
pub fn encode_student(model: &StudentModel) -> String {
    let file = StudentFile {
        student_id: model.student_id.clone(),
        params: model.params,
        topic_states: model.topic_states.values().cloned().collect(),
        trajectory: model.trajectory.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("student model serializes");
    s.push('\n');
    s
}

/// Parses and re-validates a student file.
pub fn decode_student(text: &str) -> Result<StudentModel> {
    let file: StudentFile =
        serde_json::from_str(text).map_err(|e| PersistenceError::corrupt("<json>", e.to_string()))?;
    let corrupt = |field: &str, detail: String| PersistenceError::corrupt(field, detail);

    validate_student_id(&file.student_id).map_err(|e| corrupt("student_id", e.to_string()))?;
    file.params.validate().map_err(|e| corrupt("params", e.to_string()))?;

    let mut topic_states = BTreeMap::new();
    for ts in file.topic_states {
        if let Some(field) = ts.violation() {
            return Err(corrupt(field, format!("invalid state for topic `{}`", ts.topic_id)));
        }
        let id = ts.topic_id.clone();
        if topic_states.insert(id.clone(), ts).is_some() {
            return Err(corrupt("topic_states", format!("duplicate topic `{id}`")));
        }
    }

    let mut last: Option<DateTime<Utc>> = None;
    for (i, ev) in file.trajectory.iter().enumerate() {
        if let Some(field) = ev.violation() {
            return Err(corrupt(field, format!("trajectory event {i}")));
        }
        if !ev.topic_id.is_empty() && !topic_states.contains_key(&ev.topic_id) {
            return Err(corrupt("topic_id", format!("trajectory event {i} names unknown topic `{}`", ev.topic_id)));
        }
        if last.is_some_and(|l| ev.at < l) {
            return Err(corrupt("trajectory", format!("event {i} is out of time order")));
        }
        last = Some(ev.at);
    }

    Ok(StudentModel { student_id: file.student_id, params: file.params, topic_states, trajectory: file.trajectory })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        csv_quoted(s)
    } else {
        s.to_string()
    }
}

fn csv_quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn timestamp(at: &DateTime<Utc>) -> String {
    at.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// One `feedback.csv` row, newline-terminated. A present comment is always quoted.
pub fn encode_feedback_row(rec: &FeedbackRecord) -> String {
    format!(
        "{},{},{},{},{},{}\n",
        timestamp(&rec.at),
        csv_field(&rec.student_id),
        rec.level.as_str(),
        csv_field(&rec.item_id),
        rec.rating,
        rec.comment.as_deref().map(csv_quoted).unwrap_or_default()
    )
}

pub fn encode_acceptance_row(resp: &AcceptanceResponse) -> String {
    format!("{},{},{}\n", csv_field(&resp.respondent_id), resp.category.as_str(), resp.rating)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(text.as_bytes())
}

pub fn decode_feedback(text: &str) -> Result<Vec<FeedbackRecord>> {
    let mut out = Vec::new();
    for (i, row) in csv_reader(text).records().enumerate() {
        let field = |name: &str| format!("feedback.csv[{i}].{name}");
        let row = row.map_err(|e| PersistenceError::corrupt(field("row"), e.to_string()))?;
        if row.len() != 6 {
            return Err(PersistenceError::corrupt(field("row"), format!("expected 6 columns, got {}", row.len())));
        }
        let at = DateTime::parse_from_rfc3339(&row[0])
            .map_err(|e| PersistenceError::corrupt(field("timestamp"), e.to_string()))?
            .with_timezone(&Utc);
        let level: FeedbackLevel = row[2].parse().map_err(|e: String| PersistenceError::corrupt(field("level"), e))?;
        let rating: i64 = row[4].parse().map_err(|_| PersistenceError::corrupt(field("rating"), row[4].to_string()))?;
        let rating = crate::feedback::check_rating(rating)
            .map_err(|e| PersistenceError::corrupt(field("rating"), e.to_string()))?;
        let comment = (!row[5].is_empty()).then(|| row[5].to_string());
        out.push(FeedbackRecord {
            at,
            student_id: row[1].to_string(),
            level,
            item_id: row[3].to_string(),
            rating,
            comment,
        });
    }
    Ok(out)
}

pub fn decode_acceptance(text: &str) -> Result<Vec<AcceptanceResponse>> {
    let mut out = Vec::new();
    for (i, row) in csv_reader(text).records().enumerate() {
        let field = |name: &str| format!("acceptance.csv[{i}].{name}");
        let row = row.map_err(|e| PersistenceError::corrupt(field("row"), e.to_string()))?;
        if row.len() != 3 {
            return Err(PersistenceError::corrupt(field("row"), format!("expected 3 columns, got {}", row.len())));
        }
        let category = row[1].parse().map_err(|e: String| PersistenceError::corrupt(field("category"), e))?;
        let rating: i64 = row[2].parse().map_err(|_| PersistenceError::corrupt(field("rating"), row[2].to_string()))?;
        let rating = crate::feedback::check_rating(rating)
            .map_err(|e| PersistenceError::corrupt(field("rating"), e.to_string()))?;
        out.push(AcceptanceResponse { respondent_id: row[0].to_string(), category, rating });
    }
    Ok(out)
}

/// Append-only file guarded by a mutex that also caches its row count.
#[derive(Debug)]
struct AppendLog {
    path: PathBuf,
    header: Option<&'static str>,
    rows: Mutex<Option<u64>>,
}

impl AppendLog {
    fn new(path: PathBuf, header: Option<&'static str>) -> Self {
        Self { path, header, rows: Mutex::new(None) }
    }

    fn count_rows(&self, counter: impl Fn(&str) -> Result<u64>) -> Result<u64> {
        match fs::read_to_string(&self.path) {
            Ok(text) => counter(&text),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(0),
            Err(e) => Err(PersistenceError::io(&self.path, e)),
        }
    }

    /// Appends `row` and returns its 1-based ordinal.
    fn append(&self, row: &str, counter: impl Fn(&str) -> Result<u64>) -> Result<u64> {
        let mut rows = self.rows.lock().unwrap_or_else(|p| p.into_inner());
        let current = match *rows {
            Some(n) => n,
            None => self.count_rows(&counter)?,
        };
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir).map_err(|e| PersistenceError::io(dir, e))?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| PersistenceError::io(&self.path, e))?;
        let empty = f.metadata().map_err(|e| PersistenceError::io(&self.path, e))?.len() == 0;
        let mut buf = String::new();
        if empty {
            if let Some(h) = self.header {
                buf.push_str(h);
                buf.push('\n');
            }
        }
        buf.push_str(row);
        f.write_all(buf.as_bytes()).map_err(|e| PersistenceError::io(&self.path, e))?;
        f.sync_data().map_err(|e| PersistenceError::io(&self.path, e))?;
        *rows = Some(current + 1);
        Ok(current + 1)
    }

    /// Reads the whole file while holding the append lock.
    fn snapshot(&self) -> Result<Option<String>> {
        let _guard = self.rows.lock().unwrap_or_else(|p| p.into_inner());
        match fs::read_to_string(&self.path) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(PersistenceError::io(&self.path, e)),
        }
    }
}

fn count_lines(text: &str) -> Result<u64> {
    Ok(text.lines().filter(|l| !l.trim().is_empty()).count() as u64)
}

/// Handle on a data directory. Cheap to share behind an `Arc`.
#[derive(Debug)]
pub struct DataDir {
    root: PathBuf,
    feedback: AppendLog,
    acceptance: AppendLog,
    trajectories: Mutex<HashMap<String, std::sync::Arc<AppendLog>>>,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        Self {
            feedback: AppendLog::new(root.join(FEEDBACK_FILE), Some(FEEDBACK_HEADER)),
            acceptance: AppendLog::new(root.join(ACCEPTANCE_FILE), Some(ACCEPTANCE_HEADER)),
            trajectories: Mutex::new(HashMap::new()),
            root,
        }
    }

    /// Root from `EXPERTAGENT_DATA_DIR`, falling back to `./data`.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_DATA_DIR), PathBuf::from))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn course_path(&self) -> PathBuf {
        self.root.join(COURSE_FILE)
    }

    pub fn student_path(&self, student_id: &str) -> Result<PathBuf> {
        validate_student_id(student_id)?;
        Ok(self.root.join(STUDENTS_DIR).join(format!("{student_id}.json")))
    }

    pub fn trajectory_path(&self, student_id: &str) -> Result<PathBuf> {
        validate_student_id(student_id)?;
        Ok(self.root.join(TRAJECTORY_DIR).join(format!("{student_id}.jsonl")))
    }

    pub fn feedback_path(&self) -> PathBuf {
        self.root.join(FEEDBACK_FILE)
    }

    pub fn acceptance_path(&self) -> PathBuf {
        self.root.join(ACCEPTANCE_FILE)
    }

    pub fn save_student(&self, model: &StudentModel) -> Result<PathBuf> {
        let path = self.student_path(&model.student_id)?;
        write_atomic(&path, encode_student(model).as_bytes())?;
        Ok(path)
    }

    pub fn student_exists(&self, student_id: &str) -> bool {
        self.student_path(student_id).map(|p| p.is_file()).unwrap_or(false)
    }

    pub fn load_student(&self, student_id: &str) -> Result<StudentModel> {
        let path = self.student_path(student_id)?;
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(PersistenceError::NotFound(format!("student `{student_id}`")))
            }
            Err(e) => return Err(PersistenceError::io(&path, e)),
        };
        let model = decode_student(&text)?;
        if model.student_id != student_id {
            return Err(PersistenceError::corrupt("student_id", format!("file holds `{}`", model.student_id)));
        }
        Ok(model)
    }

    /// Ids of every saved student, sorted.
    pub fn list_students(&self) -> Result<Vec<String>> {
        let dir = self.root.join(STUDENTS_DIR);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(PersistenceError::io(&dir, e)),
        };
        let mut ids = BTreeSet::new();
        for entry in entries {
            let entry = entry.map_err(|e| PersistenceError::io(&dir, e))?;
            let name = entry.file_name();
            if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".json")) {
                if validate_student_id(id).is_ok() {
                    ids.insert(id.to_string());
                }
            }
        }
        Ok(ids.into_iter().collect())
    }

    pub fn append_feedback(&self, rec: &FeedbackRecord) -> Result<u64> {
        rec.validate()?;
        self.feedback.append(&encode_feedback_row(rec), |t| decode_feedback(t).map(|v| v.len() as u64))
    }

    pub fn load_feedback(&self) -> Result<Vec<FeedbackRecord>> {
        self.feedback.snapshot()?.map_or(Ok(Vec::new()), |t| decode_feedback(&t))
    }

    pub fn append_acceptance(&self, resp: &AcceptanceResponse) -> Result<u64> {
        resp.validate()?;
        self.acceptance.append(&encode_acceptance_row(resp), |t| decode_acceptance(t).map(|v| v.len() as u64))
    }

    pub fn load_acceptance(&self) -> Result<Vec<AcceptanceResponse>> {
        self.acceptance.snapshot()?.map_or(Ok(Vec::new()), |t| decode_acceptance(&t))
    }

    fn trajectory_log(&self, student_id: &str) -> Result<std::sync::Arc<AppendLog>> {
        let path = self.trajectory_path(student_id)?;
        let mut logs = self.trajectories.lock().unwrap_or_else(|p| p.into_inner());
        Ok(logs
            .entry(student_id.to_string())
            .or_insert_with(|| std::sync::Arc::new(AppendLog::new(path, None)))
            .clone())
    }

    pub fn append_trajectory(&self, student_id: &str, event: &TrajectoryEvent) -> Result<u64> {
        if let Some(field) = event.violation() {
            return Err(PersistenceError::corrupt(field, "invalid trajectory event"));
        }
        let mut line = serde_json::to_string(event).expect("event serializes");
        line.push('\n');
        self.trajectory_log(student_id)?.append(&line, count_lines)
    }

    pub fn load_trajectory(&self, student_id: &str) -> Result<Vec<TrajectoryEvent>> {
        let log = self.trajectory_log(student_id)?;
        let Some(text) = log.snapshot()? else { return Ok(Vec::new()) };
        let mut events = Vec::new();
        for (i, line) in BufReader::new(text.as_bytes()).lines().enumerate() {
            let line = line.map_err(|e| PersistenceError::io(&log.path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let ev = serde_json::from_str(&line)
                .map_err(|e| PersistenceError::corrupt(format!("trajectory[{i}]"), e.to_string()))?;
            events.push(ev);
        }
        Ok(events)
    }

    pub fn save_document(&self, doc: &Document) -> Result<PathBuf> {
        let path = self.root.join(CORPUS_DIR).join(format!("{}.json", doc.doc_id));
        let mut text = serde_json::to_string_pretty(doc).expect("document serializes");
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    /// Every stored document, ordered by doc_id.
    pub fn load_documents(&self) -> Result<Vec<Document>> {
        let dir = self.root.join(CORPUS_DIR);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(PersistenceError::io(&dir, e)),
        };
        let mut docs = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| PersistenceError::io(&dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| PersistenceError::io(&path, e))?;
            let doc: Document = serde_json::from_str(&text)
                .map_err(|e| PersistenceError::corrupt(path.display().to_string(), e.to_string()))?;
            docs.push(doc);
        }
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        Ok(docs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrerequisiteEdge {
    pub prereq: String,
    pub dependent: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseConfig {
    pub course_id: String,
    pub topics: Vec<Topic>,
    #[serde(default)]
    pub prerequisite_edges: Vec<PrerequisiteEdge>,
    #[serde(default)]
    pub question_bank: Vec<Question>,
    #[serde(default)]
    pub document_paths: Vec<String>,
}

impl CourseConfig {
    pub fn graph(&self) -> std::result::Result<PrerequisiteGraph, GraphError> {
        PrerequisiteGraph::from_topics(
            &self.topics,
            self.prerequisite_edges.iter().map(|e| (e.prereq.clone(), e.dependent.clone())).collect(),
        )
    }

    pub fn topic(&self, topic_id: &str) -> Option<&Topic> {
        self.topics.iter().find(|t| t.topic_id == topic_id)
    }

    pub fn validate(&self) -> Result<()> {
        let corrupt = |field: String, detail: &str| PersistenceError::corrupt(field, detail);
        if self.course_id.trim().is_empty() {
            return Err(corrupt("course_id".into(), "must be non-empty"));
        }
        if self.topics.is_empty() {
            return Err(corrupt("topics".into(), "a course needs at least one topic"));
        }
        let mut topic_ids = BTreeSet::new();
        for (i, t) in self.topics.iter().enumerate() {
            if t.topic_id.is_empty() || !topic_ids.insert(t.topic_id.as_str()) {
                return Err(corrupt(format!("topics[{i}].topic_id"), "empty or duplicate topic id"));
            }
            if t.label.trim().is_empty() {
                return Err(corrupt(format!("topics[{i}].label"), "must be non-empty"));
            }
        }
        for (i, e) in self.prerequisite_edges.iter().enumerate() {
            if !topic_ids.contains(e.prereq.as_str()) {
                return Err(corrupt(format!("prerequisite_edges[{i}].prereq"), "unknown topic"));
            }
            if !topic_ids.contains(e.dependent.as_str()) {
                return Err(corrupt(format!("prerequisite_edges[{i}].dependent"), "unknown topic"));
            }
        }
        match self.graph() {
            Ok(_) => {}
            Err(GraphError::Cycle(c)) => return Err(PersistenceError::CyclicPrerequisites(c)),
            Err(GraphError::UnknownNode(n)) => return Err(corrupt("prerequisite_edges".into(), &n)),
        }
        let mut question_ids = BTreeSet::new();
        for (i, q) in self.question_bank.iter().enumerate() {
            if let Some(field) = q.violation() {
                return Err(corrupt(format!("question_bank[{i}].{field}"), "invalid question"));
            }
            if !question_ids.insert(q.question_id.as_str()) {
                return Err(corrupt(format!("question_bank[{i}].question_id"), "duplicate question id"));
            }
            if !topic_ids.contains(q.topic_id.as_str()) {
                return Err(corrupt(format!("question_bank[{i}].topic_id"), "unknown topic"));
            }
        }
        Ok(())
    }
}

pub fn parse_course(text: &str) -> Result<CourseConfig> {
    let course: CourseConfig =
        serde_json::from_str(text).map_err(|e| PersistenceError::corrupt("<json>", e.to_string()))?;
    course.validate()?;
    Ok(course)
}

pub fn load_course(path: &Path) -> Result<CourseConfig> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(PersistenceError::NotFound(path.display().to_string()))
        }
        Err(e) => return Err(PersistenceError::io(path, e)),
    };
    parse_course(&text)
}

/// Course document paths, resolved against the directory holding `course.json`.
pub fn resolve_document_paths(course: &CourseConfig, course_path: &Path) -> Vec<PathBuf> {
    let base = course_path.parent().unwrap_or_else(|| Path::new("."));
    course.document_paths.iter().map(|p| base.join(p)).collect()
}
