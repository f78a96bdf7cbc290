//! File-backed storage: an append-only JSON-lines event log for sessions, one
//! JSON-lines file each for ratings and the corpus.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use pedafeed_core::agents::Exchange;
use pedafeed_core::analytics::{read_jsonl, write_jsonl, CorpusEntry, RatingRecord};
use pedafeed_core::domain::{FeedbackMessage, MasteryLevel, StudentProfile, Task};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::OwnedMutexGuard;

pub const SESSIONS_FILE: &str = "sessions.jsonl";
pub const RATINGS_FILE: &str = "ratings.jsonl";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const TRACE_FILE: &str = "gateway-trace.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("{path} line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum RatingError {
    #[error("rater `{rater_id}` already rated `{response_id}`")]
    Duplicate { rater_id: String, response_id: String },
    #[error("{0}")]
    Invalid(String),
    #[error("no corpus entry `{0}`")]
    UnknownResponse(String),
    #[error("cannot persist rating: {0}")]
    Storage(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub task_id: String,
    pub request_id: String,
    pub question: Option<String>,
    pub message: FeedbackMessage,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub student_id: String,
    pub profile: StudentProfile,
    /// Latest source code per task.
    pub code: BTreeMap<String, String>,
    pub history: Vec<HistoryEntry>,
}

impl SessionState {
    /// Earlier exchanges on `task_id`, oldest first.
    pub fn exchanges(&self, task_id: &str) -> Vec<Exchange> {
        self.history
            .iter()
            .filter(|h| h.task_id == task_id)
            .map(|h| Exchange { question: h.question.clone(), response: h.message.text.clone() })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    HelpRequested { student_id: String, task_id: String, help_count: u32, at: DateTime<Utc> },
    CodeSaved { student_id: String, task_id: String, source_code: String, at: DateTime<Utc> },
    Solve { student_id: String, task_id: String, topic: String, solved: bool, at: DateTime<Utc> },
    Feedback { student_id: String, entry: HistoryEntry },
    MasterySet { student_id: String, mastery: Option<MasteryLevel>, at: DateTime<Utc> },
    /// Clears help counts for one task, or all tasks when `task_id` is absent.
    Reset { student_id: String, task_id: Option<String>, at: DateTime<Utc> },
}

impl SessionEvent {
    fn student_id(&self) -> &str {
        match self {
            SessionEvent::HelpRequested { student_id, .. }
            | SessionEvent::CodeSaved { student_id, .. }
            | SessionEvent::Solve { student_id, .. }
            | SessionEvent::Feedback { student_id, .. }
            | SessionEvent::MasterySet { student_id, .. }
            | SessionEvent::Reset { student_id, .. } => student_id,
        }
    }

    fn apply(&self, sessions: &mut BTreeMap<String, SessionState>) {
        let id = self.student_id();
        let state = sessions.entry(id.to_string()).or_insert_with(|| SessionState {
            student_id: id.to_string(),
            profile: StudentProfile::new(id),
            ..Default::default()
        });
        match self {
            SessionEvent::HelpRequested { task_id, help_count, .. } => {
                state.profile.help_counts.insert(task_id.clone(), *help_count);
            }
            SessionEvent::CodeSaved { task_id, source_code, .. } => {
                state.code.insert(task_id.clone(), source_code.clone());
            }
            SessionEvent::Solve { task_id, topic, solved, .. } => {
                state.profile.history.push(pedafeed_core::domain::SolveRecord {
                    task_id: task_id.clone(),
                    topic: topic.clone(),
                    solved: *solved,
                });
            }
            SessionEvent::Feedback { entry, .. } => state.history.push(entry.clone()),
            SessionEvent::MasterySet { mastery, .. } => state.profile.explicit_mastery = *mastery,
            SessionEvent::Reset { task_id: Some(task), .. } => {
                state.profile.help_counts.remove(task);
            }
            SessionEvent::Reset { task_id: None, .. } => state.profile.help_counts.clear(),
        }
    }
}

struct Ratings {
    records: Vec<RatingRecord>,
    file: File,
}

pub struct Store {
    dir: PathBuf,
    sessions: Mutex<BTreeMap<String, SessionState>>,
    session_log: Mutex<File>,
    student_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    ratings: Mutex<Ratings>,
    corpus: RwLock<Vec<CorpusEntry>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("dir", &self.dir).finish()
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> StoreError + '_ {
    move |e| StoreError::Io { path: path.to_path_buf(), reason: e.to_string() }
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

fn append_file(path: &Path) -> Result<File, StoreError> {
    OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))
}

fn append_line<W: Write, T: Serialize>(file: &mut W, value: &T) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(value).map_err(std::io::Error::other)?;
    line.push(b'\n');
    file.write_all(&line)?;
    file.flush()
}

impl Store {
    /// Opens (or creates) the store under `dir` and replays the session log.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let sessions_path = dir.join(SESSIONS_FILE);
        let mut sessions = BTreeMap::new();
        for event in read_lines::<SessionEvent>(&sessions_path)? {
            event.apply(&mut sessions);
        }
        let ratings_path = dir.join(RATINGS_FILE);
        let records = read_lines::<RatingRecord>(&ratings_path)?;
        let corpus_path = dir.join(CORPUS_FILE);
        let corpus = match File::open(&corpus_path) {
            Ok(f) => read_jsonl(BufReader::new(f)).map_err(|reason| StoreError::Corrupt {
                path: corpus_path.clone(),
                line: 0,
                reason,
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&corpus_path)(e)),
        };
        Ok(Self {
            session_log: Mutex::new(append_file(&sessions_path)?),
            ratings: Mutex::new(Ratings { records, file: append_file(&ratings_path)? }),
            dir: dir.to_path_buf(),
            sessions: Mutex::new(sessions),
            student_locks: Mutex::new(HashMap::new()),
            corpus: RwLock::new(corpus),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Serializes all session writes of one student.
    pub async fn lock_student(&self, student_id: &str) -> OwnedMutexGuard<()> {
        let lock = self
            .student_locks
            .lock()
            .expect("lock map poisoned")
            .entry(student_id.to_string())
            .or_default()
            .clone();
        lock.lock_owned().await
    }

    /// Persists `event`, then applies it to the in-memory state.
    pub fn record(&self, event: SessionEvent) -> Result<(), StoreError> {
        let path = self.dir.join(SESSIONS_FILE);
        append_line(&mut *self.session_log.lock().expect("session log poisoned"), &event).map_err(io_err(&path))?;
        event.apply(&mut self.sessions.lock().expect("sessions poisoned"));
        Ok(())
    }

    pub fn session(&self, student_id: &str) -> Option<SessionState> {
        self.sessions.lock().expect("sessions poisoned").get(student_id).cloned()
    }

    pub fn help_count(&self, student_id: &str, task_id: &str) -> u32 {
        self.session(student_id).map_or(0, |s| s.profile.help_count(task_id))
    }

    /// Increments and persists the help count; returns the new value.
    pub fn bump_help(&self, student_id: &str, task_id: &str) -> Result<u32, StoreError> {
        let help_count = self.help_count(student_id, task_id) + 1;
        self.record(SessionEvent::HelpRequested {
            student_id: student_id.into(),
            task_id: task_id.into(),
            help_count,
            at: Utc::now(),
        })?;
        Ok(help_count)
    }

    pub fn save_code(&self, student_id: &str, task_id: &str, source_code: &str) -> Result<(), StoreError> {
        self.record(SessionEvent::CodeSaved {
            student_id: student_id.into(),
            task_id: task_id.into(),
            source_code: source_code.into(),
            at: Utc::now(),
        })
    }

    pub fn record_solve(&self, student_id: &str, task: &Task, solved: bool) -> Result<(), StoreError> {
        self.record(SessionEvent::Solve {
            student_id: student_id.into(),
            task_id: task.id.clone(),
            topic: task.topic.clone(),
            solved,
            at: Utc::now(),
        })
    }

    pub fn add_rating(&self, rating: RatingRecord) -> Result<(), RatingError> {
        rating.validate().map_err(|e| RatingError::Invalid(e.to_string()))?;
        if !self.corpus.read().expect("corpus poisoned").iter().any(|e| e.entry_id == rating.response_id) {
            return Err(RatingError::UnknownResponse(rating.response_id));
        }
        let mut ratings = self.ratings.lock().expect("ratings poisoned");
        if ratings.records.iter().any(|r| r.rater_id == rating.rater_id && r.response_id == rating.response_id) {
            return Err(RatingError::Duplicate { rater_id: rating.rater_id, response_id: rating.response_id });
        }
        append_line(&mut ratings.file, &rating).map_err(|e| RatingError::Storage(e.to_string()))?;
        ratings.records.push(rating);
        Ok(())
    }

    pub fn ratings(&self) -> Vec<RatingRecord> {
        self.ratings.lock().expect("ratings poisoned").records.clone()
    }

    pub fn corpus(&self) -> Vec<CorpusEntry> {
        self.corpus.read().expect("corpus poisoned").clone()
    }

    pub fn corpus_entry(&self, entry_id: &str) -> Option<CorpusEntry> {
        self.corpus.read().expect("corpus poisoned").iter().find(|e| e.entry_id == entry_id).cloned()
    }

    /// Replaces the corpus file atomically.
    pub fn replace_corpus(&self, entries: Vec<CorpusEntry>) -> Result<(), StoreError> {
        let path = self.dir.join(CORPUS_FILE);
        write_corpus_file(&path, &entries)?;
        *self.corpus.write().expect("corpus poisoned") = entries;
        Ok(())
    }

    /// Canonical JSON-lines dump of all sessions, ordered by student id.
    pub fn export_sessions(&self) -> Vec<u8> {
        let sessions = self.sessions.lock().expect("sessions poisoned");
        let mut out = Vec::new();
        for state in sessions.values() {
            append_line(&mut out, state).expect("in-memory write");
        }
        out
    }

    pub fn export_ratings(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for rating in &self.ratings.lock().expect("ratings poisoned").records {
            append_line(&mut out, rating).expect("in-memory write");
        }
        out
    }

    pub fn export_corpus(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_jsonl(&self.corpus.read().expect("corpus poisoned"), &mut out).expect("in-memory write");
        out
    }
}

/// Writes `entries` to `path` through a temporary file and a rename.
pub fn write_corpus_file(path: &Path, entries: &[CorpusEntry]) -> Result<(), StoreError> {
    let tmp = path.with_extension("jsonl.tmp");
    let file = File::create(&tmp).map_err(io_err(&tmp))?;
    let mut writer = std::io::BufWriter::new(file);
    write_jsonl(entries, &mut writer).map_err(io_err(&tmp))?;
    writer.flush().map_err(io_err(&tmp))?;
    drop(writer);
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_corpus_file(path: &Path) -> Result<Vec<CorpusEntry>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_jsonl(BufReader::new(file)).map_err(|reason| StoreError::Corrupt { path: path.to_path_buf(), line: 0, reason })
}
