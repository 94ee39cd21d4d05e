//! Append-only provenance ledger over a content-addressed object store.

mod artifact;
mod event;
mod record;
mod store;
pub mod workbook;

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;

pub use artifact::{ArtifactRef, ArtifactRole};
pub use event::{Action, Actor, CodecError, LedgerEvent, NewEvent, Subject};
pub use record::{Decisions, EventView, FinalDecision, GateRecord, LedgerState, PaperRecord, TriageRecord};
pub use store::{DirStore, MemoryStore, ObjectStore};

use crate::clock::Timestamp;
use crate::digest::ContentHash;
use crate::stage::Stage;
use crate::track::{PaperId, Track};

pub const EVENT_LOG: &str = "events.log";
pub const OBJECTS_DIR: &str = "objects";

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("unknown paper {0}")]
    UnknownPaper(String),
    #[error("unknown dataset {0}")]
    UnknownDataset(String),
    #[error("paper {0} already registered")]
    DuplicatePaper(String),
    #[error("dataset {url} already registered for track {track}")]
    DuplicateDataset { url: String, track: Track },
    #[error("empty artifact")]
    EmptyArtifact,
    #[error("{paper}: role {role} already bound to {bound}, refusing {attempted}")]
    RoleConflict { paper: String, role: ArtifactRole, bound: ContentHash, attempted: ContentHash },
    #[error("{paper}: illegal transition {from} -> {to}: {reason}")]
    IllegalTransition { paper: String, from: Stage, to: Stage, reason: String },
    #[error("{paper} is terminal at {stage}")]
    Terminal { paper: String, stage: Stage },
    #[error("{paper}: expected stage {expected}, found {actual}")]
    StageMismatch { paper: String, expected: Stage, actual: Stage },
    #[error("{0}: author set is locked")]
    AuthorsLocked(String),
    #[error("unmet gate condition for {paper}: {condition}")]
    UnmetGate { paper: String, condition: String },
    #[error("artifact {0} not found")]
    NotFound(ContentHash),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("corrupt event log at line {line}: {detail}")]
    Corrupt { line: usize, detail: String },
    #[error("storage failure: {0}")]
    Storage(#[from] io::Error),
}

struct Log {
    events: Vec<LedgerEvent>,
    file: Option<File>,
}

/// The single serialization point of the engine.
///
/// Appends take a mutex; readers get lock-free copy-on-write snapshots.
pub struct Ledger {
    log: Mutex<Log>,
    snapshot: ArcSwap<LedgerState>,
    store: Arc<dyn ObjectStore>,
    dir: Option<PathBuf>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger").field("dir", &self.dir).field("events", &self.event_count()).finish()
    }
}

impl Ledger {
    pub fn in_memory() -> Self {
        Ledger {
            log: Mutex::new(Log { events: Vec::new(), file: None }),
            snapshot: ArcSwap::from_pointee(LedgerState::default()),
            store: Arc::new(MemoryStore::new()),
            dir: None,
        }
    }

    /// Opens (or creates) a ledger directory and replays its event log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let store = DirStore::open(dir.join(OBJECTS_DIR))?;
        let log_path = dir.join(EVENT_LOG);
        let events = match fs::read_to_string(&log_path) {
            Ok(text) => parse_events(&text)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let state = replay(&events)?;
        let file = OpenOptions::new().create(true).append(true).open(&log_path)?;
        Ok(Ledger {
            log: Mutex::new(Log { events, file: Some(file) }),
            snapshot: ArcSwap::from_pointee(state),
            store: Arc::new(store),
            dir: Some(dir.to_path_buf()),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn snapshot(&self) -> Arc<LedgerState> {
        self.snapshot.load_full()
    }

    pub fn paper(&self, id: &PaperId) -> Option<Arc<PaperRecord>> {
        self.snapshot.load().papers.get(id).cloned()
    }

    pub fn append(&self, ev: NewEvent) -> Result<LedgerEvent, LedgerError> {
        self.append_guarded(ev, |_| Ok(()))
    }

    /// Appends `ev` after `guard` accepts the state it would apply to.
    ///
    /// The guard runs under the append lock, so check-then-act conditions
    /// (gates, stage preconditions) cannot race with other writers.
    pub fn append_guarded<F>(&self, ev: NewEvent, guard: F) -> Result<LedgerEvent, LedgerError>
    where
        F: FnOnce(&LedgerState) -> Result<(), LedgerError>,
    {
        let mut log = self.log.lock().unwrap_or_else(|p| p.into_inner());
        let current = self.snapshot.load_full();
        guard(&current)?;
        let mut next = LedgerState::clone(&current);
        let stage = next.apply(&EventView {
            timestamp: ev.timestamp,
            subject: &ev.subject,
            action: &ev.action,
            actor: &ev.actor,
            hashes: &ev.artifact_hashes,
        })?;
        let seq = log.events.len() as u64 + 1;
        next.last_seq = seq;
        let recorded = LedgerEvent {
            seq,
            timestamp: ev.timestamp,
            subject: ev.subject,
            stage,
            action: ev.action,
            actor: ev.actor,
            artifact_hashes: ev.artifact_hashes,
        };
        if let Some(file) = log.file.as_mut() {
            let mut line = recorded.to_line();
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        log.events.push(recorded.clone());
        self.snapshot.store(Arc::new(next));
        Ok(recorded)
    }

    /// Stores bytes without binding them to a role (prompts, release documents).
    pub fn put_blob(&self, bytes: &[u8]) -> Result<ContentHash, LedgerError> {
        if bytes.is_empty() {
            return Err(LedgerError::EmptyArtifact);
        }
        let hash = ContentHash::of(bytes);
        self.store.put(&hash, bytes)?;
        Ok(hash)
    }

    /// Stores `bytes` and binds them to `role` on the paper.
    ///
    /// Re-binding the same bytes is idempotent and appends nothing.
    pub fn put_artifact(
        &self,
        paper: &PaperId,
        role: ArtifactRole,
        bytes: &[u8],
        at: Timestamp,
        actor: Actor,
    ) -> Result<ArtifactRef, LedgerError> {
        let hash = ContentHash::of(bytes);
        if bytes.is_empty() {
            return Err(LedgerError::EmptyArtifact);
        }
        let snap = self.snapshot();
        let rec = snap.paper(paper).ok_or_else(|| LedgerError::UnknownPaper(paper.to_string()))?;
        if let Some(bound) = rec.artifact(role) {
            if bound.content_hash == hash {
                return Ok(bound.clone());
            }
        }
        self.store.put(&hash, bytes)?;
        let action = Action::PutArtifact {
            role,
            byte_size: bytes.len() as u64,
            media_hint: role.default_media_hint().to_string(),
        };
        self.append(NewEvent::for_paper(at, paper, action, actor).with_hashes(vec![hash.clone()]))?;
        let snap = self.snapshot();
        Ok(snap.paper(paper).and_then(|r| r.artifact(role)).cloned().expect("artifact just bound"))
    }

    pub fn get_artifact(&self, hash: &ContentHash) -> Result<Vec<u8>, LedgerError> {
        self.store.get(hash)?.ok_or_else(|| LedgerError::NotFound(hash.clone()))
    }

    pub fn has_object(&self, hash: &ContentHash) -> Result<bool, LedgerError> {
        Ok(self.store.contains(hash)?)
    }

    pub fn store(&self) -> &dyn ObjectStore {
        self.store.as_ref()
    }

    pub fn events(&self) -> Vec<LedgerEvent> {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).events.clone()
    }

    pub fn events_for(&self, paper: &PaperId) -> Vec<LedgerEvent> {
        let log = self.log.lock().unwrap_or_else(|p| p.into_inner());
        log.events.iter().filter(|e| e.paper_id() == Some(paper)).cloned().collect()
    }

    pub fn event_count(&self) -> usize {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).events.len()
    }

    /// The event log in its on-disk line format.
    pub fn export_events(&self) -> String {
        let log = self.log.lock().unwrap_or_else(|p| p.into_inner());
        let mut out = String::new();
        for ev in &log.events {
            out.push_str(&ev.to_line());
            out.push('\n');
        }
        out
    }

    pub fn export_workbook(&self, track: Track) -> String {
        workbook::export(&self.snapshot(), track)
    }

    /// Every hash referenced by an event or record and absent from the store.
    pub fn missing_objects(&self) -> Result<Vec<ContentHash>, LedgerError> {
        let mut missing = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        let snap = self.snapshot();
        let from_records = snap
            .papers
            .values()
            .flat_map(|p| p.artifact_refs.values().map(|a| a.content_hash.clone()).collect::<Vec<_>>());
        let from_release = snap.release.values().cloned();
        let from_events = self.events().into_iter().flat_map(|e| e.artifact_hashes);
        for h in from_records.chain(from_release).chain(from_events) {
            if seen.insert(h.clone()) && !self.store.contains(&h)? {
                missing.push(h);
            }
        }
        Ok(missing)
    }
}

pub fn parse_events(text: &str) -> Result<Vec<LedgerEvent>, LedgerError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            LedgerEvent::from_line(l).map_err(|e| LedgerError::Corrupt { line: i + 1, detail: e.to_string() })
        })
        .collect()
}

/// Folds an event log into ledger state, checking sequence numbers and the
/// recorded stage of every event.
pub fn replay(events: &[LedgerEvent]) -> Result<LedgerState, LedgerError> {
    let mut state = LedgerState::default();
    for (i, ev) in events.iter().enumerate() {
        let expected = i as u64 + 1;
        if ev.seq != expected {
            return Err(LedgerError::Corrupt { line: i + 1, detail: format!("seq {} where {expected} expected", ev.seq) });
        }
        let stage = state
            .apply(&EventView {
                timestamp: ev.timestamp,
                subject: &ev.subject,
                action: &ev.action,
                actor: &ev.actor,
                hashes: &ev.artifact_hashes,
            })
            .map_err(|e| LedgerError::Corrupt { line: i + 1, detail: e.to_string() })?;
        if stage != ev.stage {
            return Err(LedgerError::Corrupt { line: i + 1, detail: "recorded stage disagrees with replay".into() });
        }
        state.last_seq = ev.seq;
    }
    Ok(state)
}
