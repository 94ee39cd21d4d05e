//! Paper records and the event reducer that derives them.
//!
//! The live ledger and `Ledger::replay` both fold events through
//! [`LedgerState::apply`], so the stored records are by construction the
//! fold of the event log.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::artifact::{ArtifactRef, ArtifactRole};
use super::event::{Action, Actor, Subject};
use super::LedgerError;
use crate::agents::TemplateRole;
use crate::camera_ready::FictionalAuthorSet;
use crate::clock::Timestamp;
use crate::digest::ContentHash;
use crate::intake::{DatasetId, DatasetRecord};
use crate::orchestrator::{Gate, GateDecision};
use crate::review::{R1Recommendation, R2Verdict, TriageDecision};
use crate::score::Tenths;
use crate::stage::{Stage, TransitionKind};
use crate::track::{PaperId, Track};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FinalDecision {
    Accept,
    Reject,
    Pending,
}

impl FinalDecision {
    pub fn label(self) -> &'static str {
        match self {
            FinalDecision::Accept => "ACCEPT",
            FinalDecision::Reject => "REJECT",
            FinalDecision::Pending => "PENDING",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decisions {
    pub initial: Option<TriageDecision>,
    #[serde(rename = "final")]
    pub final_decision: FinalDecision,
}

/// Scores and decision from the latest triage of a paper.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageRecord {
    pub r1_score: Tenths,
    pub r1_recommendation: R1Recommendation,
    pub r2_score: Tenths,
    pub r2_verdict: R2Verdict,
    pub total: Tenths,
    pub decision: TriageDecision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateRecord {
    pub decision: GateDecision,
    pub approver: String,
    pub timestamp: Timestamp,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: PaperId,
    pub track: Track,
    pub dataset_id: DatasetId,
    pub title: Option<String>,
    pub pages: Option<u32>,
    /// Wall-clock duration of the generation agent call.
    pub generation_seconds: Option<i64>,
    pub stage: Stage,
    pub stage_timestamps: BTreeMap<Stage, Timestamp>,
    pub artifact_refs: BTreeMap<ArtifactRole, ArtifactRef>,
    pub triage: Option<TriageRecord>,
    /// First triage result; later cycles do not overwrite it.
    pub first_triage: Option<TriageRecord>,
    pub decisions: Decisions,
    pub authors: Option<FictionalAuthorSet>,
    pub gates: BTreeMap<Gate, GateRecord>,
    pub coi_clean: Option<bool>,
    pub revision_check_passed: Option<bool>,
    pub camera_ready_passed: Option<bool>,
    /// Triage slot the current revision cycle started from.
    pub revision_origin: Option<Stage>,
    pub re_reviews: u32,
    pub manifest_hash: Option<ContentHash>,
    pub audit_passed: Option<bool>,
    pub closed: Option<String>,
}

impl PaperRecord {
    fn new(paper_id: PaperId, track: Track, dataset_id: DatasetId, at: Timestamp) -> Self {
        PaperRecord {
            paper_id,
            track,
            dataset_id,
            title: None,
            pages: None,
            generation_seconds: None,
            stage: Stage::Registered,
            stage_timestamps: BTreeMap::from([(Stage::Registered, at)]),
            artifact_refs: BTreeMap::new(),
            triage: None,
            first_triage: None,
            decisions: Decisions { initial: None, final_decision: FinalDecision::Pending },
            authors: None,
            gates: BTreeMap::new(),
            coi_clean: None,
            revision_check_passed: None,
            camera_ready_passed: None,
            revision_origin: None,
            re_reviews: 0,
            manifest_hash: None,
            audit_passed: None,
            closed: None,
        }
    }

    pub fn generation_hours(&self) -> Option<f64> {
        self.generation_seconds.map(|s| s as f64 / 3600.0)
    }

    pub fn artifact(&self, role: ArtifactRole) -> Option<&ArtifactRef> {
        self.artifact_refs.get(&role)
    }

    pub fn review_refs(&self) -> Option<(&ArtifactRef, &ArtifactRef)> {
        Some((self.artifact(ArtifactRole::Review1)?, self.artifact(ArtifactRole::Review2)?))
    }

    pub fn revised_paper(&self) -> bool {
        self.artifact_refs.contains_key(&ArtifactRole::Revised)
    }

    pub fn response_letter(&self) -> bool {
        self.artifact_refs.contains_key(&ArtifactRole::ResponseLetter)
    }

    pub fn gate_approved(&self, gate: Gate) -> bool {
        self.gates.get(&gate).is_some_and(|g| g.decision == GateDecision::Approve)
    }

    /// True once no further events may be recorded for the paper.
    pub fn is_frozen(&self) -> bool {
        self.stage.is_terminal() || self.closed.is_some()
    }

    fn enter_stage(&mut self, to: Stage, at: Timestamp) {
        self.stage_timestamps.retain(|s, _| s.order() < to.order());
        self.stage_timestamps.insert(to, at);
        self.stage = to;
    }

    fn unbind(&mut self, roles: &[ArtifactRole]) {
        for r in roles {
            self.artifact_refs.remove(r);
        }
    }
}

/// Everything derived from the event log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LedgerState {
    pub papers: BTreeMap<PaperId, Arc<PaperRecord>>,
    pub datasets: BTreeMap<DatasetId, Arc<DatasetRecord>>,
    pub release: BTreeMap<String, ContentHash>,
    pub last_seq: u64,
}

/// The subset of an event the reducer needs.
pub struct EventView<'a> {
    pub timestamp: Timestamp,
    pub subject: &'a Subject,
    pub action: &'a Action,
    pub actor: &'a Actor,
    pub hashes: &'a [ContentHash],
}

impl LedgerState {
    pub fn paper(&self, id: &PaperId) -> Option<&PaperRecord> {
        self.papers.get(id).map(|p| p.as_ref())
    }

    pub fn dataset(&self, id: &DatasetId) -> Option<&DatasetRecord> {
        self.datasets.get(id).map(|d| d.as_ref())
    }

    pub fn papers_in_track(&self, track: Track) -> impl Iterator<Item = &PaperRecord> {
        self.papers.values().filter(move |p| p.track == track).map(|p| p.as_ref())
    }

    /// Checks and applies one event, returning the paper stage after it.
    pub fn apply(&mut self, ev: &EventView<'_>) -> Result<Option<Stage>, LedgerError> {
        match ev.subject {
            Subject::Dataset(id) => self.apply_dataset(id, ev).map(|_| None),
            Subject::Release => self.apply_release(ev).map(|_| None),
            Subject::Paper(id) => {
                if let Action::RegisterPaper { track, dataset_id } = ev.action {
                    return self.register_paper(id, *track, dataset_id, ev.timestamp).map(Some);
                }
                let current = self.papers.get(id).ok_or_else(|| LedgerError::UnknownPaper(id.to_string()))?;
                if current.is_frozen() {
                    return Err(LedgerError::Terminal { paper: id.to_string(), stage: current.stage });
                }
                let mut rec = PaperRecord::clone(current);
                apply_paper(&mut rec, ev)?;
                let stage = rec.stage;
                self.papers.insert(id.clone(), Arc::new(rec));
                Ok(Some(stage))
            }
        }
    }

    fn register_paper(
        &mut self,
        id: &PaperId,
        track: Track,
        dataset_id: &DatasetId,
        at: Timestamp,
    ) -> Result<Stage, LedgerError> {
        if self.papers.contains_key(id) {
            return Err(LedgerError::DuplicatePaper(id.to_string()));
        }
        if id.track() != track {
            return Err(LedgerError::InvalidEvent(format!("paper {id} does not belong to track {track}")));
        }
        let dataset = self
            .datasets
            .get(dataset_id)
            .ok_or_else(|| LedgerError::UnknownDataset(dataset_id.to_string()))?;
        if at.date_naive() < dataset.ingestion_date {
            return Err(LedgerError::InvalidEvent(format!("paper {id} registered before its dataset was ingested")));
        }
        if dataset.track != track {
            return Err(LedgerError::InvalidEvent(format!(
                "dataset {dataset_id} is registered for {} not {track}",
                dataset.track
            )));
        }
        self.papers
            .insert(id.clone(), Arc::new(PaperRecord::new(id.clone(), track, dataset_id.clone(), at)));
        Ok(Stage::Registered)
    }

    fn apply_dataset(&mut self, id: &DatasetId, ev: &EventView<'_>) -> Result<(), LedgerError> {
        match ev.action {
            Action::RegisterDataset { record } => {
                if &record.dataset_id != id {
                    return Err(LedgerError::InvalidEvent("dataset id does not match subject".into()));
                }
                if self.datasets.contains_key(id)
                    || self.datasets.values().any(|d| d.url == record.url && d.track == record.track)
                {
                    return Err(LedgerError::DuplicateDataset { url: record.url.clone(), track: record.track });
                }
                self.datasets.insert(id.clone(), Arc::new(DatasetRecord::clone(record)));
                Ok(())
            }
            other if !self.datasets.contains_key(id) => {
                Err(LedgerError::UnknownDataset(format!("{id} ({})", other.verb())))
            }
            other => Err(LedgerError::InvalidEvent(format!("{} is not a dataset action", other.verb()))),
        }
    }

    fn apply_release(&mut self, ev: &EventView<'_>) -> Result<(), LedgerError> {
        match ev.action {
            Action::ReleaseArtifact { name, .. } => {
                let [hash] = ev.hashes else {
                    return Err(LedgerError::InvalidEvent("release artifact needs exactly one hash".into()));
                };
                self.release.insert(name.clone(), hash.clone());
                Ok(())
            }
            other => Err(LedgerError::InvalidEvent(format!("{} is not a release action", other.verb()))),
        }
    }
}

fn apply_paper(rec: &mut PaperRecord, ev: &EventView<'_>) -> Result<(), LedgerError> {
    let paper = rec.paper_id.to_string();
    match ev.action {
        Action::RegisterPaper { .. } | Action::RegisterDataset { .. } | Action::ReleaseArtifact { .. } => {
            return Err(LedgerError::InvalidEvent(format!("{} is not a paper action", ev.action.verb())));
        }
        Action::PutArtifact { role, byte_size, media_hint } => {
            let [hash] = ev.hashes else {
                return Err(LedgerError::InvalidEvent("put_artifact needs exactly one hash".into()));
            };
            if let Some(bound) = rec.artifact_refs.get(role) {
                if &bound.content_hash != hash {
                    return Err(LedgerError::RoleConflict {
                        paper,
                        role: *role,
                        bound: bound.content_hash.clone(),
                        attempted: hash.clone(),
                    });
                }
            }
            rec.artifact_refs.insert(
                *role,
                ArtifactRef {
                    role: *role,
                    content_hash: hash.clone(),
                    byte_size: *byte_size,
                    media_hint: media_hint.clone(),
                },
            );
        }
        Action::Reopen { roles } => {
            rec.unbind(roles);
            if roles.iter().any(|r| matches!(r, ArtifactRole::Review1 | ArtifactRole::Review2)) {
                rec.coi_clean = None;
            }
        }
        Action::Advance { from, to } => {
            check_from(rec, *from)?;
            check_time(rec, ev.timestamp)?;
            match from.transition_kind(*to) {
                Some(TransitionKind::Forward) => {}
                Some(TransitionKind::ReReview) => {
                    if rec.revision_origin != Some(Stage::TriageRevise) {
                        return Err(illegal(rec, *to, "re-review only follows a Revise triage"));
                    }
                    if rec.re_reviews >= 1 {
                        return Err(illegal(rec, *to, "re-review cycle already used"));
                    }
                    rec.re_reviews += 1;
                }
                Some(TransitionKind::Regression) => {
                    return Err(illegal(rec, *to, "regressions are recorded with regress"));
                }
                None => return Err(illegal(rec, *to, "illegal transition")),
            }
            match to {
                Stage::Reviewed => {
                    rec.triage = None;
                }
                Stage::TriageReject => rec.decisions.final_decision = FinalDecision::Reject,
                Stage::Revised => {
                    rec.revision_origin = Some(*from);
                    rec.revision_check_passed = None;
                }
                Stage::CameraReady => rec.decisions.final_decision = FinalDecision::Accept,
                _ => {}
            }
            rec.enter_stage(*to, ev.timestamp);
        }
        Action::Regress { from, to, .. } => {
            check_from(rec, *from)?;
            check_time(rec, ev.timestamp)?;
            if from.transition_kind(*to) != Some(TransitionKind::Regression) {
                return Err(illegal(rec, *to, "not a regression edge"));
            }
            match (from, to) {
                (Stage::CameraReady, Stage::Revised) => {
                    rec.unbind(&[ArtifactRole::CameraReady, ArtifactRole::Metadata]);
                    rec.camera_ready_passed = None;
                    rec.gates.remove(&Gate::RevisionValidation);
                    rec.decisions.final_decision = FinalDecision::Pending;
                }
                (Stage::Revised, triage) => {
                    if rec.revision_origin != Some(*triage) {
                        return Err(illegal(rec, *to, "regression must return to the originating triage"));
                    }
                    rec.unbind(&[ArtifactRole::Revised, ArtifactRole::ResponseLetter]);
                    rec.revision_check_passed = None;
                    rec.camera_ready_passed = None;
                    rec.gates.remove(&Gate::RevisionValidation);
                }
                _ => unreachable!("regression edges are enumerated in Stage::transition_kind"),
            }
            rec.enter_stage(*to, ev.timestamp);
        }
        Action::Manuscript { title, pages } => {
            if *pages == 0 {
                return Err(LedgerError::InvalidEvent("pages must be positive".into()));
            }
            rec.title = Some(title.clone());
            rec.pages = Some(*pages);
        }
        Action::Invoke { role, started, finished, .. } => {
            if finished < started {
                return Err(LedgerError::InvalidEvent("invocation finished before it started".into()));
            }
            if *role == TemplateRole::Generation {
                rec.generation_seconds = Some((*finished - *started).num_seconds());
            }
        }
        Action::InvokeRetry { .. } => {}
        Action::Coi { ok, .. } => rec.coi_clean = Some(*ok),
        Action::Triage { r1_score, r1_recommendation, r2_score, r2_verdict, total, decision } => {
            if rec.stage != Stage::Reviewed {
                return Err(LedgerError::StageMismatch { paper, expected: Stage::Reviewed, actual: rec.stage });
            }
            let t = TriageRecord {
                r1_score: *r1_score,
                r1_recommendation: *r1_recommendation,
                r2_score: *r2_score,
                r2_verdict: *r2_verdict,
                total: *total,
                decision: *decision,
            };
            if rec.decisions.initial.is_none() {
                rec.decisions.initial = Some(*decision);
                rec.first_triage = Some(t.clone());
            }
            rec.triage = Some(t);
        }
        Action::RevisionCheck { passed, .. } => rec.revision_check_passed = Some(*passed),
        Action::CameraReadyReport { passed, .. } => rec.camera_ready_passed = Some(*passed),
        Action::Authors { set } => {
            if !set.locked {
                return Err(LedgerError::InvalidEvent("author set must be locked before recording".into()));
            }
            match &rec.authors {
                Some(existing) if existing != set.as_ref() => {
                    return Err(LedgerError::AuthorsLocked(paper));
                }
                _ => rec.authors = Some(FictionalAuthorSet::clone(set)),
            }
        }
        Action::Gate { gate, decision, approver, note } => {
            rec.gates.insert(
                *gate,
                GateRecord {
                    decision: *decision,
                    approver: approver.clone(),
                    timestamp: ev.timestamp,
                    note: note.clone(),
                },
            );
        }
        Action::ManifestEntry { manifest_hash } => rec.manifest_hash = Some(manifest_hash.clone()),
        Action::Audit { passed, .. } => rec.audit_passed = Some(*passed),
        Action::Close { reason } => {
            rec.closed = Some(reason.clone());
            rec.decisions.final_decision = FinalDecision::Reject;
        }
    }
    Ok(())
}

fn check_from(rec: &PaperRecord, from: Stage) -> Result<(), LedgerError> {
    if rec.stage != from {
        return Err(LedgerError::StageMismatch { paper: rec.paper_id.to_string(), expected: from, actual: rec.stage });
    }
    Ok(())
}

fn check_time(rec: &PaperRecord, at: Timestamp) -> Result<(), LedgerError> {
    match rec.stage_timestamps.get(&rec.stage) {
        Some(entered) if at < *entered => Err(LedgerError::InvalidEvent(format!(
            "{}: transition at {} precedes entry into {}",
            rec.paper_id,
            crate::clock::format_timestamp(&at),
            rec.stage
        ))),
        _ => Ok(()),
    }
}

fn illegal(rec: &PaperRecord, to: Stage, reason: &str) -> LedgerError {
    LedgerError::IllegalTransition {
        paper: rec.paper_id.to_string(),
        from: rec.stage,
        to,
        reason: reason.to_string(),
    }
}
