//! Session registry with an append-only event log and a snapshot per session.
//!
//! Layout: `<data_dir>/<session id>/events.jsonl` and `snapshot.json`. An
//! event is on disk before the request that produced it is acknowledged.
//! On open, every session is rebuilt from its event log.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use fareopt_core::protocol::Protocol;
use fareopt_core::OptionSet;
use rand::rngs::OsRng;
use rand::RngCore;
use thiserror::Error;
use tokio::sync::Mutex;

use crate::session::{Event, ParticipantMeta, Phase, Session, SessionError, SessionResults, SurveyCondition};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown session")]
    NotFound,
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("storage: {0}")]
    Io(String),
}

fn io(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Io(format!("{}: {e}", path.display()))
}

/// The pending query of a session and where it sits in the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingQuery {
    pub step: usize,
    pub phase: Phase,
    pub total_steps: usize,
    pub query: OptionSet,
}

pub struct SessionStore {
    protocol: Protocol<f64>,
    data_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    /// Opens the store, replaying every session found under `data_dir`.
    pub fn open(protocol: Protocol<f64>, data_dir: Option<PathBuf>) -> Result<Self, StoreError> {
        let mut sessions = HashMap::new();
        if let Some(dir) = &data_dir {
            fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
            let mut entries: Vec<PathBuf> = fs::read_dir(dir).map_err(|e| io(dir, e))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
            entries.sort();
            for path in entries.into_iter().filter(|p| p.join("events.jsonl").is_file()) {
                let session = load_session(&path)?;
                log::info!("restored session {} at step {}", session.id, session.step());
                sessions.insert(session.id.clone(), Arc::new(Mutex::new(session)));
            }
        }
        Ok(Self { protocol, data_dir, sessions: RwLock::new(sessions) })
    }

    pub fn protocol(&self) -> &Protocol<f64> {
        &self.protocol
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, StoreError> {
        self.sessions.read().expect("registry lock").get(id).cloned().ok_or(StoreError::NotFound)
    }

    fn persist(&self, session: &Session, event: &Event) -> Result<(), StoreError> {
        let Some(root) = &self.data_dir else { return Ok(()) };
        let dir = root.join(&session.id);
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        let log_path = dir.join("events.jsonl");
        let mut line = serde_json::to_string(event).expect("event serializes");
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&log_path).map_err(|e| io(&log_path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| io(&log_path, e))?;
        f.sync_data().map_err(|e| io(&log_path, e))?;
        Ok(())
    }

    fn write_snapshot(&self, session: &Session) {
        let Some(root) = &self.data_dir else { return };
        let dir = root.join(&session.id);
        let tmp = dir.join("snapshot.json.tmp");
        let text = serde_json::to_string(session).expect("session serializes");
        if let Err(e) = fs::write(&tmp, text).and_then(|_| fs::rename(&tmp, dir.join("snapshot.json"))) {
            log::warn!("snapshot of session {} not written: {e}", session.id);
        }
    }

    /// Creates a session; a missing seed is drawn from the OS.
    pub async fn create(&self, meta: ParticipantMeta, condition: SurveyCondition, seed: Option<u64>) -> Result<(String, Phase), StoreError> {
        let id = new_token();
        let seed = seed.unwrap_or_else(|| OsRng.next_u64());
        let protocol = self.protocol.clone();
        let (session, event) = tokio::task::spawn_blocking(move || Session::create(id, meta, condition, seed, protocol))
            .await
            .map_err(|e| StoreError::Io(e.to_string()))??;
        self.persist(&session, &event)?;
        self.write_snapshot(&session);
        let out = (session.id.clone(), session.phase());
        self.sessions.write().expect("registry lock").insert(session.id.clone(), Arc::new(Mutex::new(session)));
        Ok(out)
    }

    pub async fn phase(&self, id: &str) -> Result<Phase, StoreError> {
        Ok(self.get(id)?.lock().await.phase())
    }

    /// The pending query, generated and logged on first request.
    pub async fn query(&self, id: &str) -> Result<PendingQuery, StoreError> {
        let guard = self.get(id)?.lock_owned().await;
        let (mut guard, generated) = tokio::task::spawn_blocking(move || {
            let mut guard = guard;
            let r = guard.query();
            (guard, r)
        })
        .await
        .map_err(|e| StoreError::Io(e.to_string()))?;
        let (query, event) = generated?;
        if let Some(event) = event {
            if let Err(e) = self.persist(&guard, &event) {
                guard.pending = None;
                return Err(e);
            }
            self.write_snapshot(&guard);
        }
        let p = &guard.protocol;
        Ok(PendingQuery { step: guard.step(), phase: guard.phase(), total_steps: p.total_queries(), query })
    }

    /// Records an answer to the pending query; returns its step and the new
    /// phase. `step`, when given, must match the pending query's step.
    pub async fn answer(&self, id: &str, choice: usize, step: Option<usize>) -> Result<(usize, Phase), StoreError> {
        let guard = self.get(id)?.lock_owned().await;
        let event = guard.check_answer(choice, step)?;
        let recorded_step = guard.step();
        self.persist(&guard, &event)?;
        let (guard, recorded) = tokio::task::spawn_blocking(move || {
            let mut guard = guard;
            let r = guard.record_answer(choice);
            (guard, r)
        })
        .await
        .map_err(|e| StoreError::Io(e.to_string()))?;
        recorded?;
        self.write_snapshot(&guard);
        Ok((recorded_step, guard.phase()))
    }

    pub async fn results(&self, id: &str) -> Result<SessionResults, StoreError> {
        let guard = self.get(id)?.lock_owned().await;
        tokio::task::spawn_blocking(move || guard.results()).await.map_err(|e| StoreError::Io(e.to_string()))?.map_err(Into::into)
    }

    /// A copy of the session state.
    pub async fn snapshot(&self, id: &str) -> Result<Session, StoreError> {
        Ok(self.get(id)?.lock().await.clone())
    }
}

/// Unguessable 128-bit session token.
fn new_token() -> String {
    let mut bytes = [0u8; 16];
    OsRng.fill_bytes(&mut bytes);
    hex::encode(bytes)
}

/// Replays one session directory. A torn final line is dropped.
fn load_session(dir: &Path) -> Result<Session, StoreError> {
    let path = dir.join("events.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| io(&path, e))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<Event>(line) {
            Ok(e) => events.push(e),
            Err(e) if i + 1 == lines.len() && !text.ends_with('\n') => {
                log::warn!("{}: dropping torn last event: {e}", path.display());
                let keep = text.len() - line.len();
                OpenOptions::new().write(true).open(&path).and_then(|f| f.set_len(keep as u64)).map_err(|e| io(&path, e))?;
            }
            Err(e) => return Err(io(&path, format!("line {}: {e}", i + 1))),
        }
    }
    let session = Session::replay(&events)?;
    let snap = dir.join("snapshot.json");
    if let Ok(s) = fs::read_to_string(&snap) {
        if serde_json::from_str::<Session>(&s).ok().as_ref() != Some(&session) {
            log::warn!("{}: snapshot disagrees with the event log; using the log", snap.display());
        }
    }
    Ok(session)
}
