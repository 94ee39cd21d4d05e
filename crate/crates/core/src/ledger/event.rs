//! Ledger events and their line-oriented text encoding.
//!
//! One event per line: `seq|iso8601|subject|stage|action|actor|hashes`.
//! The action field is a verb optionally followed by a space and
//! form-urlencoded parameters, so no field ever contains a raw `|`.

use std::fmt;
use std::str::FromStr;

use crate::agents::TemplateRole;
use crate::camera_ready::FictionalAuthorSet;
use crate::clock::{format_timestamp, parse_timestamp, Timestamp};
use crate::digest::ContentHash;
use crate::intake::{DatasetId, DatasetRecord};
use crate::ledger::artifact::ArtifactRole;
use crate::orchestrator::{Gate, GateDecision};
use crate::review::{R1Recommendation, R2Verdict, TriageDecision};
use crate::score::Tenths;
use crate::stage::Stage;
use crate::track::{PaperId, Track};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Actor {
    Human,
    Agent(String),
    /// The orchestrator itself (stage bookkeeping, checks, hashing).
    System,
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Human => f.write_str("human"),
            Actor::Agent(id) => write!(f, "agent({id})"),
            Actor::System => f.write_str("system"),
        }
    }
}

impl FromStr for Actor {
    type Err = CodecError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(Actor::Human),
            "system" => Ok(Actor::System),
            _ => s
                .strip_prefix("agent(")
                .and_then(|r| r.strip_suffix(')'))
                .filter(|id| !id.is_empty())
                .map(|id| Actor::Agent(id.to_string()))
                .ok_or_else(|| CodecError::new("actor", s)),
        }
    }
}

/// What an event is about. Datasets and release-level documents share the
/// log with papers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subject {
    Paper(PaperId),
    Dataset(DatasetId),
    Release,
}

impl Subject {
    pub fn paper(&self) -> Option<&PaperId> {
        match self {
            Subject::Paper(p) => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Paper(p) => write!(f, "{p}"),
            Subject::Dataset(d) => write!(f, "{d}"),
            Subject::Release => f.write_str("release"),
        }
    }
}

impl FromStr for Subject {
    type Err = CodecError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "release" {
            return Ok(Subject::Release);
        }
        if let Ok(d) = DatasetId::parse(s) {
            return Ok(Subject::Dataset(d));
        }
        PaperId::parse(s)
            .map(Subject::Paper)
            .map_err(|_| CodecError::new("subject", s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    RegisterPaper {
        track: Track,
        dataset_id: DatasetId,
    },
    RegisterDataset {
        record: Box<DatasetRecord>,
    },
    PutArtifact {
        role: ArtifactRole,
        byte_size: u64,
        media_hint: String,
    },
    /// Unbind roles so that a new version can be produced.
    Reopen {
        roles: Vec<ArtifactRole>,
    },
    Advance {
        from: Stage,
        to: Stage,
    },
    Regress {
        from: Stage,
        to: Stage,
        reason: String,
    },
    Manuscript {
        title: String,
        pages: u32,
    },
    Invoke {
        role: TemplateRole,
        template_id: String,
        template_lock: ContentHash,
        agent_id: String,
        model_family: String,
        model_version: String,
        attempts: u32,
        started: Timestamp,
        finished: Timestamp,
    },
    InvokeRetry {
        agent_id: String,
        attempt: u32,
        error: String,
    },
    Coi {
        generator: String,
        reviewers: Vec<String>,
        ok: bool,
    },
    Triage {
        r1_score: Tenths,
        r1_recommendation: R1Recommendation,
        r2_score: Tenths,
        r2_verdict: R2Verdict,
        total: Tenths,
        decision: TriageDecision,
    },
    RevisionCheck {
        passed: bool,
        problems: Vec<String>,
    },
    CameraReadyReport {
        passed: bool,
        failed: Vec<String>,
    },
    Authors {
        set: Box<FictionalAuthorSet>,
    },
    Gate {
        gate: Gate,
        decision: GateDecision,
        approver: String,
        note: String,
    },
    ManifestEntry {
        manifest_hash: ContentHash,
    },
    Audit {
        passed: bool,
        manifest_hash: ContentHash,
    },
    Close {
        reason: String,
    },
    ReleaseArtifact {
        name: String,
        byte_size: u64,
    },
}

impl Action {
    pub fn verb(&self) -> &'static str {
        match self {
            Action::RegisterPaper { .. } => "register",
            Action::RegisterDataset { .. } => "register_dataset",
            Action::PutArtifact { .. } => "put_artifact",
            Action::Reopen { .. } => "reopen",
            Action::Advance { .. } => "advance",
            Action::Regress { .. } => "regress",
            Action::Manuscript { .. } => "manuscript",
            Action::Invoke { .. } => "invoke",
            Action::InvokeRetry { .. } => "invoke_retry",
            Action::Coi { .. } => "coi",
            Action::Triage { .. } => "triage",
            Action::RevisionCheck { .. } => "revision_check",
            Action::CameraReadyReport { .. } => "camera_ready_report",
            Action::Authors { .. } => "authors",
            Action::Gate { .. } => "gate",
            Action::ManifestEntry { .. } => "manifest_entry",
            Action::Audit { .. } => "audit",
            Action::Close { .. } => "close",
            Action::ReleaseArtifact { .. } => "release_artifact",
        }
    }

    pub fn is_registration(&self) -> bool {
        matches!(self, Action::RegisterPaper { .. } | Action::RegisterDataset { .. })
    }

    /// Stage transitions and gate decisions; the denominator of the
    /// human-in-the-loop load metric.
    pub fn is_gate_relevant(&self) -> bool {
        matches!(self, Action::Advance { .. } | Action::Regress { .. } | Action::Gate { .. })
    }

    fn params(&self) -> Vec<(&'static str, String)> {
        fn list<T: fmt::Display>(items: &[T]) -> String {
            items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
        }
        match self {
            Action::RegisterPaper { track, dataset_id } => {
                vec![("track", track.code().to_string()), ("dataset", dataset_id.to_string())]
            }
            Action::RegisterDataset { record } => {
                vec![("record", serde_json::to_string(record).expect("dataset record serializes"))]
            }
            Action::PutArtifact { role, byte_size, media_hint } => vec![
                ("role", role.to_string()),
                ("size", byte_size.to_string()),
                ("media", media_hint.clone()),
            ],
            Action::Reopen { roles } => vec![("roles", list(roles))],
            Action::Advance { from, to } => vec![("from", from.to_string()), ("to", to.to_string())],
            Action::Regress { from, to, reason } => vec![
                ("from", from.to_string()),
                ("to", to.to_string()),
                ("reason", reason.clone()),
            ],
            Action::Manuscript { title, pages } => {
                vec![("title", title.clone()), ("pages", pages.to_string())]
            }
            Action::Invoke {
                role,
                template_id,
                template_lock,
                agent_id,
                model_family,
                model_version,
                attempts,
                started,
                finished,
            } => vec![
                ("role", role.to_string()),
                ("template", template_id.clone()),
                ("lock", template_lock.to_string()),
                ("agent", agent_id.clone()),
                ("family", model_family.clone()),
                ("version", model_version.clone()),
                ("attempts", attempts.to_string()),
                ("started", format_timestamp(started)),
                ("finished", format_timestamp(finished)),
            ],
            Action::InvokeRetry { agent_id, attempt, error } => vec![
                ("agent", agent_id.clone()),
                ("attempt", attempt.to_string()),
                ("error", error.clone()),
            ],
            Action::Coi { generator, reviewers, ok } => vec![
                ("generator", generator.clone()),
                ("reviewers", reviewers.join(",")),
                ("ok", ok.to_string()),
            ],
            Action::Triage {
                r1_score,
                r1_recommendation,
                r2_score,
                r2_verdict,
                total,
                decision,
            } => vec![
                ("r1", r1_score.to_string()),
                ("r1_rec", r1_recommendation.token().to_string()),
                ("r2", r2_score.to_string()),
                ("r2_verdict", r2_verdict.token().to_string()),
                ("total", total.to_string()),
                ("decision", decision.token().to_string()),
            ],
            Action::RevisionCheck { passed, problems } | Action::CameraReadyReport { passed, failed: problems } => vec![
                ("passed", passed.to_string()),
                ("problems", serde_json::to_string(problems).expect("strings serialize")),
            ],
            Action::Authors { set } => {
                vec![("set", serde_json::to_string(set).expect("author set serializes"))]
            }
            Action::Gate { gate, decision, approver, note } => vec![
                ("gate", gate.to_string()),
                ("decision", decision.to_string()),
                ("approver", approver.clone()),
                ("note", note.clone()),
            ],
            Action::ManifestEntry { manifest_hash } => vec![("manifest", manifest_hash.to_string())],
            Action::Audit { passed, manifest_hash } => {
                vec![("passed", passed.to_string()), ("manifest", manifest_hash.to_string())]
            }
            Action::Close { reason } => vec![("reason", reason.clone())],
            Action::ReleaseArtifact { name, byte_size } => {
                vec![("name", name.clone()), ("size", byte_size.to_string())]
            }
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.verb())?;
        let params = self.params();
        if !params.is_empty() {
            let encoded = form_urlencoded::Serializer::new(String::new())
                .extend_pairs(params.iter().map(|(k, v)| (*k, v.as_str())))
                .finish();
            write!(f, " {encoded}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot decode {field} from {value:?}")]
pub struct CodecError {
    pub field: String,
    pub value: String,
}

impl CodecError {
    fn new(field: &str, value: &str) -> Self {
        CodecError { field: field.to_string(), value: value.to_string() }
    }
}

struct Params(Vec<(String, String)>);

impl Params {
    fn str(&self, key: &str) -> Result<&str, CodecError> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| CodecError::new(key, "<missing>"))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T, CodecError> {
        let v = self.str(key)?;
        v.parse().map_err(|_| CodecError::new(key, v))
    }

    fn json<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T, CodecError> {
        let v = self.str(key)?;
        serde_json::from_str(v).map_err(|_| CodecError::new(key, v))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CodecError> {
        let v = self.str(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',').map(|s| s.parse().map_err(|_| CodecError::new(key, v))).collect()
    }

    fn timestamp(&self, key: &str) -> Result<Timestamp, CodecError> {
        let v = self.str(key)?;
        parse_timestamp(v).map_err(|_| CodecError::new(key, v))
    }
}

impl FromStr for Action {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (verb, query) = s.split_once(' ').unwrap_or((s, ""));
        let p = Params(form_urlencoded::parse(query.as_bytes()).into_owned().collect());
        let track = |p: &Params| -> Result<Track, CodecError> {
            let v = p.str("track")?;
            Track::from_code(v).ok_or_else(|| CodecError::new("track", v))
        };
        Ok(match verb {
            "register" => Action::RegisterPaper { track: track(&p)?, dataset_id: p.parse("dataset")? },
            "register_dataset" => Action::RegisterDataset { record: Box::new(p.json("record")?) },
            "put_artifact" => Action::PutArtifact {
                role: p.parse("role")?,
                byte_size: p.parse("size")?,
                media_hint: p.str("media")?.to_string(),
            },
            "reopen" => Action::Reopen { roles: p.list("roles")? },
            "advance" => Action::Advance { from: p.parse("from")?, to: p.parse("to")? },
            "regress" => Action::Regress {
                from: p.parse("from")?,
                to: p.parse("to")?,
                reason: p.str("reason")?.to_string(),
            },
            "manuscript" => Action::Manuscript { title: p.str("title")?.to_string(), pages: p.parse("pages")? },
            "invoke" => Action::Invoke {
                role: p.parse("role")?,
                template_id: p.str("template")?.to_string(),
                template_lock: p.parse("lock")?,
                agent_id: p.str("agent")?.to_string(),
                model_family: p.str("family")?.to_string(),
                model_version: p.str("version")?.to_string(),
                attempts: p.parse("attempts")?,
                started: p.timestamp("started")?,
                finished: p.timestamp("finished")?,
            },
            "invoke_retry" => Action::InvokeRetry {
                agent_id: p.str("agent")?.to_string(),
                attempt: p.parse("attempt")?,
                error: p.str("error")?.to_string(),
            },
            "coi" => Action::Coi {
                generator: p.str("generator")?.to_string(),
                reviewers: p.list("reviewers")?,
                ok: p.parse("ok")?,
            },
            "triage" => Action::Triage {
                r1_score: p.parse("r1")?,
                r1_recommendation: p.parse("r1_rec")?,
                r2_score: p.parse("r2")?,
                r2_verdict: p.parse("r2_verdict")?,
                total: p.parse("total")?,
                decision: p.parse("decision")?,
            },
            "revision_check" => Action::RevisionCheck { passed: p.parse("passed")?, problems: p.json("problems")? },
            "camera_ready_report" => {
                Action::CameraReadyReport { passed: p.parse("passed")?, failed: p.json("problems")? }
            }
            "authors" => Action::Authors { set: Box::new(p.json("set")?) },
            "gate" => Action::Gate {
                gate: p.parse("gate")?,
                decision: p.parse("decision")?,
                approver: p.str("approver")?.to_string(),
                note: p.str("note")?.to_string(),
            },
            "manifest_entry" => Action::ManifestEntry { manifest_hash: p.parse("manifest")? },
            "audit" => Action::Audit { passed: p.parse("passed")?, manifest_hash: p.parse("manifest")? },
            "close" => Action::Close { reason: p.str("reason")?.to_string() },
            "release_artifact" => Action::ReleaseArtifact { name: p.str("name")?.to_string(), byte_size: p.parse("size")? },
            other => return Err(CodecError::new("verb", other)),
        })
    }
}

/// An event as submitted by a caller; the ledger assigns `seq` and `stage`.
#[derive(Debug, Clone, PartialEq)]
pub struct NewEvent {
    pub timestamp: Timestamp,
    pub subject: Subject,
    pub action: Action,
    pub actor: Actor,
    pub artifact_hashes: Vec<ContentHash>,
}

impl NewEvent {
    pub fn new(timestamp: Timestamp, subject: Subject, action: Action, actor: Actor) -> Self {
        NewEvent { timestamp, subject, action, actor, artifact_hashes: Vec::new() }
    }

    pub fn for_paper(timestamp: Timestamp, paper: &PaperId, action: Action, actor: Actor) -> Self {
        NewEvent::new(timestamp, Subject::Paper(paper.clone()), action, actor)
    }

    pub fn with_hashes(mut self, hashes: Vec<ContentHash>) -> Self {
        self.artifact_hashes = hashes;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEvent {
    pub seq: u64,
    pub timestamp: Timestamp,
    pub subject: Subject,
    /// Stage of the paper after this event; `None` for non-paper subjects.
    pub stage: Option<Stage>,
    pub action: Action,
    pub actor: Actor,
    pub artifact_hashes: Vec<ContentHash>,
}

impl LedgerEvent {
    pub fn paper_id(&self) -> Option<&PaperId> {
        self.subject.paper()
    }

    pub fn to_line(&self) -> String {
        let hashes = if self.artifact_hashes.is_empty() {
            "-".to_string()
        } else {
            self.artifact_hashes.iter().map(|h| h.as_str()).collect::<Vec<_>>().join(",")
        };
        format!(
            "{}|{}|{}|{}|{}|{}|{}",
            self.seq,
            format_timestamp(&self.timestamp),
            self.subject,
            self.stage.map_or("-", Stage::as_str),
            self.action,
            self.actor,
            hashes
        )
    }

    pub fn from_line(line: &str) -> Result<Self, CodecError> {
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 7 {
            return Err(CodecError::new("line", line));
        }
        let seq = fields[0].parse().map_err(|_| CodecError::new("seq", fields[0]))?;
        let timestamp = parse_timestamp(fields[1]).map_err(|_| CodecError::new("timestamp", fields[1]))?;
        let subject = fields[2].parse()?;
        let stage = match fields[3] {
            "-" => None,
            s => Some(s.parse().map_err(|_| CodecError::new("stage", s))?),
        };
        let action = fields[4].parse()?;
        let actor = fields[5].parse()?;
        let artifact_hashes = match fields[6] {
            "-" => Vec::new(),
            hs => hs
                .split(',')
                .map(|h| ContentHash::parse(h).map_err(|_| CodecError::new("hash", h)))
                .collect::<Result<_, _>>()?,
        };
        Ok(LedgerEvent { seq, timestamp, subject, stage, action, actor, artifact_hashes })
    }
}
