//! Verification sessions, persisted as one append-only JSON-lines log per
//! session and replayed on startup.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, NaiveDate, Utc};
use ecosearch_core::FilterSpec;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_text: String,
    pub filters: FilterSpec,
    pub k: usize,
    pub nprobe: usize,
    pub timestamp: DateTime<Utc>,
}

/// One ranked hit with its metadata, as stored and exported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub rank: u32,
    pub observation_id: u64,
    pub score: f32,
    pub taxon_path: Vec<u32>,
    pub observed_at: NaiveDate,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub image_url: String,
    pub observation_link: String,
}

impl ResultRow {
    pub fn leaf_taxon_id(&self) -> Option<u32> {
        self.taxon_path.last().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkState {
    pub marked: bool,
    pub marked_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub queries: Vec<QueryRecord>,
    /// Latest result page.
    pub results: Option<Vec<ResultRow>>,
    pub surfaced: HashSet<u64>,
    pub marks: BTreeMap<u64, MarkState>,
}

impl Session {
    fn new(session_id: String, created_at: DateTime<Utc>) -> Self {
        Self {
            session_id,
            created_at,
            queries: Vec::new(),
            results: None,
            surfaced: HashSet::new(),
            marks: BTreeMap::new(),
        }
    }

    pub fn is_marked(&self, observation_id: u64) -> bool {
        self.marks.get(&observation_id).is_some_and(|m| m.marked)
    }

    fn apply(&mut self, event: &LogEvent) -> Result<()> {
        match event {
            LogEvent::Created { .. } => {}
            LogEvent::Query { query, results } => {
                self.queries.push(query.clone());
                self.surfaced.extend(results.iter().map(|r| r.observation_id));
                self.results = Some(results.clone());
            }
            LogEvent::Mark {
                observation_id,
                marked,
                marked_at,
            } => {
                if !self.surfaced.contains(observation_id) {
                    return Err(ServiceError::InvalidMark(*observation_id));
                }
                self.marks.insert(
                    *observation_id,
                    MarkState {
                        marked: *marked,
                        marked_at: *marked_at,
                    },
                );
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum LogEvent {
    Created {
        session_id: String,
        created_at: DateTime<Utc>,
    },
    Query {
        query: QueryRecord,
        results: Vec<ResultRow>,
    },
    Mark {
        observation_id: u64,
        marked: bool,
        marked_at: DateTime<Utc>,
    },
}

struct Entry {
    session: Session,
    log: Option<File>,
}

impl Entry {
    fn record(&mut self, event: LogEvent) -> Result<()> {
        // validate against a copy so a failed write leaves memory untouched
        let mut next = self.session.clone();
        next.apply(&event)?;
        if let Some(log) = &mut self.log {
            let mut line = serde_json::to_vec(&event)?;
            line.push(b'\n');
            log.write_all(&line)?;
            log.sync_data()?;
        }
        self.session = next;
        Ok(())
    }
}

/// Sessions by id. Each session is guarded by its own lock, so mutations to
/// one session are serialized while different sessions proceed in parallel.
pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
}

fn log_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

fn replay(path: &Path) -> Result<Session> {
    let bad = |message: String| ServiceError::SessionLog {
        path: path.display().to_string(),
        message,
    };
    let mut reader = BufReader::new(File::open(path)?);
    let mut session: Option<Session> = None;
    let mut line = String::new();
    let mut n = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        n += 1;
        if !line.ends_with('\n') {
            // torn final write: the event never completed
            break;
        }
        let event: LogEvent =
            serde_json::from_str(line.trim_end()).map_err(|e| bad(format!("line {n}: {e}")))?;
        match (&mut session, &event) {
            (None, LogEvent::Created {
                session_id,
                created_at,
            }) => session = Some(Session::new(session_id.clone(), *created_at)),
            (None, _) => return Err(bad("log does not start with a created event".into())),
            (Some(s), _) => s.apply(&event).map_err(|e| bad(format!("line {n}: {e}")))?,
        }
    }
    session.ok_or_else(|| bad("empty log".into()))
}

impl SessionStore {
    /// Sessions held only in memory.
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// Opens `dir`, replaying every `*.jsonl` log in it.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let session = replay(&path)?;
            let log = OpenOptions::new().append(true).open(&path)?;
            sessions.insert(
                session.session_id.clone(),
                Arc::new(Mutex::new(Entry {
                    session,
                    log: Some(log),
                })),
            );
        }
        Ok(Self {
            dir: Some(dir),
            sessions: RwLock::new(sessions),
        })
    }

    /// Reads one session's log without opening the whole store.
    pub fn load_session(dir: impl AsRef<Path>, session_id: &str) -> Result<Session> {
        if !valid_id(session_id) {
            return Err(ServiceError::SessionNotFound(session_id.into()));
        }
        let path = log_path(dir.as_ref(), session_id);
        if !path.exists() {
            return Err(ServiceError::SessionNotFound(session_id.into()));
        }
        replay(&path)
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn create(&self) -> Result<Session> {
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let created_at = Utc::now();
        let log = match &self.dir {
            Some(dir) => {
                let mut f = OpenOptions::new()
                    .create_new(true)
                    .append(true)
                    .open(log_path(dir, &session_id))?;
                let mut line = serde_json::to_vec(&LogEvent::Created {
                    session_id: session_id.clone(),
                    created_at,
                })?;
                line.push(b'\n');
                f.write_all(&line)?;
                f.sync_data()?;
                Some(f)
            }
            None => None,
        };
        let session = Session::new(session_id.clone(), created_at);
        self.sessions.write().unwrap().insert(
            session_id,
            Arc::new(Mutex::new(Entry {
                session: session.clone(),
                log,
            })),
        );
        Ok(session)
    }

    fn entry(&self, session_id: &str) -> Result<Arc<Mutex<Entry>>> {
        self.sessions
            .read()
            .unwrap()
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::SessionNotFound(session_id.into()))
    }

    pub fn get(&self, session_id: &str) -> Result<Session> {
        Ok(self.entry(session_id)?.lock().unwrap().session.clone())
    }

    /// Runs `f` with the session locked.
    pub fn with_session<T>(&self, session_id: &str, f: impl FnOnce(&Session) -> T) -> Result<T> {
        let entry = self.entry(session_id)?;
        let guard = entry.lock().unwrap();
        Ok(f(&guard.session))
    }

    /// Appends a query and its results, returning the updated session.
    pub fn record_query(
        &self,
        session_id: &str,
        query: QueryRecord,
        results: Vec<ResultRow>,
    ) -> Result<Session> {
        let entry = self.entry(session_id)?;
        let mut guard = entry.lock().unwrap();
        guard.record(LogEvent::Query { query, results })?;
        Ok(guard.session.clone())
    }

    pub fn mark(&self, session_id: &str, observation_id: u64, marked: bool) -> Result<MarkState> {
        let entry = self.entry(session_id)?;
        let mut guard = entry.lock().unwrap();
        let marked_at = Utc::now();
        guard.record(LogEvent::Mark {
            observation_id,
            marked,
            marked_at,
        })?;
        Ok(MarkState { marked, marked_at })
    }
}
