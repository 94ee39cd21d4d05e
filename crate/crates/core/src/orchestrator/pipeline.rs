use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AdapterKind, Config, ConfigError, DatasetFixture};
use super::gate::{Gate, GateApproval, GateDecision};
use crate::agents::{
    check_coi, invoke_agent, AgentAdapter, AgentError, AgentProfile, AgentResult, CoiViolation, HttpAdapter, InvokeContext,
    MockAdapter, ProfileError, RetryPolicy, ScoreBook, ScoreBookError, TemplateError, TemplateRole, TemplateSet,
};
use crate::archive::{
    self, emit_podcast_feed, ArchiveError, AuditReport, Episode, ReleaseManifest, ReleasePolicy, PODCAST_NAME,
    PROCEEDINGS_NAME,
};
use crate::camera_ready::{
    assign_fictional_authors, prepare, verify, AuthorError, CameraReadyInputs, CameraReadyReport, Denylist,
    FictionalAuthorSet, InstitutionTokens, MetadataSidecar, NamePool, TemplateProfile,
};
use crate::clock::{Clock, SimulatedClock, Timestamp};
use crate::digest::ContentHash;
use crate::intake::{self, DatasetId, DatasetMeta, DatasetRecord, IntakeError};
use crate::latex::{self, Document, LatexError};
use crate::ledger::{Action, Actor, ArtifactRole, Ledger, LedgerError, LedgerState, NewEvent, PaperRecord};
use crate::presentation::{
    build_avatar_job, check_slide_lineage, plan_slides, segment_narration, AvatarChoice, AvatarError, Consent,
    NarrationError, NarrationScript, PresentationError, AVATAR_LABEL,
};
use crate::review::{parse_review_r1, parse_review_r2, triage, ReviewParseError, TriageDecision, TriagePolicy};
use crate::revision::{
    check_no_bullets, measure_expansion, parse_response_letter, validate_markup, validate_response_letter, LetterError,
};
use crate::stage::Stage;
use crate::track::{PaperId, Track};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Intake(#[from] IntakeError),
    #[error("review: {0}")]
    Review(#[from] ReviewParseError),
    #[error("latex: {0}")]
    Latex(#[from] LatexError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Authors(#[from] AuthorError),
    #[error(transparent)]
    Presentation(#[from] PresentationError),
    #[error("narration: {0}")]
    Narration(#[from] NarrationError),
    #[error(transparent)]
    Avatar(#[from] AvatarError),
    #[error(transparent)]
    Coi(#[from] CoiViolation),
    #[error("response letter: {0}")]
    Letter(#[from] LetterError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    ScoreBook(#[from] ScoreBookError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("{paper}: {what}")]
    Precondition { paper: String, what: String },
    #[error("panicked: {0}")]
    Panic(String),
}

fn precondition(paper: &PaperId, what: impl Into<String>) -> PipelineError {
    PipelineError::Precondition { paper: paper.to_string(), what: what.into() }
}

/// The agent configuration for each role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentRoster {
    profiles: BTreeMap<TemplateRole, AgentProfile>,
}

impl AgentRoster {
    pub fn standard() -> Self {
        let mk = |id: &str, family: &str, role| {
            let config = BTreeMap::from([("temperature".to_string(), "0.2".to_string())]);
            AgentProfile::new(id, family, "1.0", role, config).expect("static agent id")
        };
        let profiles = BTreeMap::from([
            (TemplateRole::Generation, mk("author-agent", "hikma-author", TemplateRole::Generation)),
            (TemplateRole::Reviewer1, mk("reviewer-1", "hikma-reviewer-a", TemplateRole::Reviewer1)),
            (TemplateRole::Reviewer2, mk("reviewer-2", "hikma-reviewer-b", TemplateRole::Reviewer2)),
            (TemplateRole::Revision, mk("revision-agent", "hikma-author", TemplateRole::Revision)),
            (TemplateRole::ResponseLetter, mk("letter-agent", "hikma-author", TemplateRole::ResponseLetter)),
            (TemplateRole::Slides, mk("slides-agent", "hikma-presenter", TemplateRole::Slides)),
            (TemplateRole::Narration, mk("narration-agent", "hikma-presenter", TemplateRole::Narration)),
        ]);
        AgentRoster { profiles }
    }

    pub fn with(mut self, profile: AgentProfile) -> Self {
        self.profiles.insert(profile.role, profile);
        self
    }

    pub fn get(&self, role: TemplateRole) -> &AgentProfile {
        &self.profiles[&role]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub triage: TriagePolicy,
    pub retry: RetryPolicy,
    pub budget_s: f64,
    pub words_per_minute: u32,
    pub release: ReleasePolicy,
    pub seed: u64,
    pub approver: String,
    pub template_profile: TemplateProfile,
    pub avatar: AvatarChoice,
    pub consent: Option<Consent>,
    pub resolution: String,
}

impl Default for Settings {
    fn default() -> Self {
        Settings::from_config(&Config::default())
    }
}

impl Settings {
    pub fn from_config(c: &Config) -> Self {
        Settings {
            triage: TriagePolicy { accept_threshold: c.accept_threshold },
            retry: RetryPolicy { max_attempts: c.max_attempts, initial_backoff_ms: c.initial_backoff_ms },
            budget_s: c.presentation_budget_s,
            words_per_minute: c.words_per_minute,
            release: ReleasePolicy { base_url: c.base_url.clone(), publish_reviews: c.publish_reviews },
            seed: c.seed,
            approver: c.approver.clone(),
            template_profile: TemplateProfile::default(),
            avatar: AvatarChoice::Library(c.avatar_id.clone()),
            consent: None,
            resolution: c.resolution.clone(),
        }
    }
}

/// Outcome of the revision checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionOutcome {
    pub passed: bool,
    pub problems: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseOutcome {
    pub manifest: ReleaseManifest,
    pub report: AuditReport,
}

fn decision_stage(d: TriageDecision) -> Stage {
    match d {
        TriageDecision::Accept => Stage::TriageAccept,
        TriageDecision::Revise => Stage::TriageRevise,
        TriageDecision::Reject => Stage::TriageReject,
    }
}

fn unmet(rec: &PaperRecord, condition: &str) -> LedgerError {
    LedgerError::UnmetGate { paper: rec.paper_id.to_string(), condition: condition.to_string() }
}

fn need_roles(rec: &PaperRecord, roles: &[ArtifactRole]) -> Result<(), LedgerError> {
    match roles.iter().find(|r| rec.artifact(**r).is_none()) {
        Some(r) => Err(unmet(rec, &format!("{r} artifact missing"))),
        None => Ok(()),
    }
}

/// Conditions a forward or re-review move must meet beyond graph legality.
pub fn check_advance(st: &LedgerState, rec: &PaperRecord, to: Stage) -> Result<(), LedgerError> {
    use Stage::*;
    let from = rec.stage;
    if rec.is_frozen() {
        return Err(LedgerError::Terminal { paper: rec.paper_id.to_string(), stage: from });
    }
    if from.transition_kind(to).is_none() {
        return Err(LedgerError::IllegalTransition {
            paper: rec.paper_id.to_string(),
            from,
            to,
            reason: "illegal transition".into(),
        });
    }
    match (from, to) {
        (Registered, Drafted) => {
            let cleared = st.dataset(&rec.dataset_id).is_some_and(DatasetRecord::cleared_for_use);
            if !cleared {
                return Err(unmet(rec, "ip_risk"));
            }
            if !rec.gate_approved(Gate::DatasetClearance) {
                return Err(unmet(rec, "dataset_clearance approval"));
            }
            need_roles(rec, &[ArtifactRole::Draft])
        }
        (Drafted | Revised, Reviewed) => {
            if from == Revised && rec.revision_check_passed != Some(true) {
                return Err(unmet(rec, "revision check"));
            }
            need_roles(rec, &[ArtifactRole::Review1, ArtifactRole::Review2])?;
            if rec.coi_clean != Some(true) {
                return Err(unmet(rec, "conflict-of-interest check"));
            }
            Ok(())
        }
        (Reviewed, _) => match &rec.triage {
            Some(t) if decision_stage(t.decision) == to => Ok(()),
            Some(_) => Err(unmet(rec, "triage decision names a different stage")),
            None => Err(unmet(rec, "triage decision")),
        },
        (TriageAccept | TriageRevise, Revised) => need_roles(rec, &[ArtifactRole::Revised, ArtifactRole::ResponseLetter]),
        (Revised, CameraReady) => {
            if !rec.gate_approved(Gate::RevisionValidation) {
                return Err(unmet(rec, "revision_validation approval"));
            }
            need_roles(rec, &[ArtifactRole::CameraReady, ArtifactRole::Metadata])?;
            if !rec.authors.as_ref().is_some_and(|a| a.locked) {
                return Err(unmet(rec, "locked fictional authors"));
            }
            if rec.camera_ready_passed != Some(true) {
                return Err(unmet(rec, "camera-ready report"));
            }
            Ok(())
        }
        (CameraReady, Presented) => {
            if rec.camera_ready_passed != Some(true) {
                return Err(unmet(rec, "camera-ready report"));
            }
            need_roles(rec, &[ArtifactRole::Slides, ArtifactRole::Narration, ArtifactRole::AvatarJob, ArtifactRole::VideoMeta])
        }
        (Presented, Archived) => {
            if rec.manifest_hash.is_none() {
                return Err(unmet(rec, "manifest entry"));
            }
            if rec.audit_passed != Some(true) {
                return Err(unmet(rec, "audit"));
            }
            if !rec.gate_approved(Gate::ReleaseApproval) {
                return Err(unmet(rec, "release_approval"));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn check_gate(st: &LedgerState, rec: &PaperRecord, gate: Gate, decision: GateDecision) -> Result<(), LedgerError> {
    let expected = match gate {
        Gate::DatasetClearance => Stage::Registered,
        Gate::RevisionValidation => Stage::Revised,
        Gate::ReleaseApproval => Stage::Presented,
    };
    if rec.is_frozen() {
        return Err(LedgerError::Terminal { paper: rec.paper_id.to_string(), stage: rec.stage });
    }
    if rec.stage != expected {
        return Err(LedgerError::StageMismatch { paper: rec.paper_id.to_string(), expected, actual: rec.stage });
    }
    if decision == GateDecision::Reject {
        return Ok(());
    }
    match gate {
        Gate::DatasetClearance => {
            if !st.dataset(&rec.dataset_id).is_some_and(DatasetRecord::cleared_for_use) {
                return Err(unmet(rec, "ip_risk"));
            }
        }
        Gate::RevisionValidation => {
            if rec.revision_check_passed != Some(true) {
                return Err(unmet(rec, "revision check"));
            }
        }
        Gate::ReleaseApproval => {
            if rec.audit_passed != Some(true) {
                return Err(unmet(rec, "audit"));
            }
        }
    }
    Ok(())
}

/// TeX source of a title to display text.
fn plain_title(t: &str) -> String {
    let mut s = t.to_string();
    for (from, to) in [("\\&", "&"), ("\\%", "%"), ("\\_", "_"), ("\\#", "#"), ("\\$", "$"), ("~", " ")] {
        s = s.replace(from, to);
    }
    s.replace(['{', '}'], "").split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Runs pipeline stages against one ledger.
pub struct Engine {
    ledger: Arc<Ledger>,
    templates: TemplateSet,
    roster: AgentRoster,
    adapter: Arc<dyn AgentAdapter>,
    settings: Settings,
    names: NamePool,
    tokens: InstitutionTokens,
    denylist: Denylist,
}

impl Engine {
    pub fn new(ledger: Arc<Ledger>, adapter: Arc<dyn AgentAdapter>, settings: Settings) -> Self {
        Engine {
            ledger,
            templates: TemplateSet::shipped(),
            roster: AgentRoster::standard(),
            adapter,
            settings,
            names: NamePool::shipped(),
            tokens: InstitutionTokens::shipped(),
            denylist: Denylist::shipped(),
        }
    }

    /// Ledger (persistent when `ledger_dir` is set), adapter and settings
    /// from a config.
    pub fn from_config(config: &Config) -> Result<Self, PipelineError> {
        let ledger = match &config.ledger_dir {
            Some(dir) => Ledger::open(dir)?,
            None => Ledger::in_memory(),
        };
        let adapter: Arc<dyn AgentAdapter> = match config.adapter {
            AdapterKind::Mock => {
                let book = match &config.score_table {
                    Some(p) => ScoreBook::parse_csv(&read(p)?)?,
                    None => ScoreBook::shipped(),
                };
                Arc::new(MockAdapter::new(book))
            }
            AdapterKind::Http => {
                let endpoint = config.endpoint.as_deref().expect("validated");
                let timeout = std::time::Duration::from_millis(config.timeout_ms);
                Arc::new(
                    HttpAdapter::new(endpoint, timeout)
                        .map_err(|e| ConfigError::Invalid(format!("endpoint: {e}")))?,
                )
            }
        };
        let mut engine = Engine::new(Arc::new(ledger), adapter, Settings::from_config(config));
        for (role, a) in &config.agents {
            let p = AgentProfile::new(&a.agent_id, &a.model_family, &a.model_version, *role, a.config.clone())?;
            engine.roster = engine.roster.with(p);
        }
        Ok(engine)
    }

    pub fn with_roster(mut self, roster: AgentRoster) -> Self {
        self.roster = roster;
        self
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_author_sources(mut self, names: NamePool, tokens: InstitutionTokens, denylist: Denylist) -> Self {
        self.names = names;
        self.tokens = tokens;
        self.denylist = denylist;
        self
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn roster(&self) -> &AgentRoster {
        &self.roster
    }

    fn record(&self, pid: &PaperId) -> Result<Arc<PaperRecord>, PipelineError> {
        self.ledger.paper(pid).ok_or_else(|| LedgerError::UnknownPaper(pid.to_string()).into())
    }

    fn text(&self, rec: &PaperRecord, role: ArtifactRole) -> Result<String, PipelineError> {
        let a = rec.artifact(role).ok_or_else(|| precondition(&rec.paper_id, format!("no {role} artifact")))?;
        let bytes = self.ledger.get_artifact(&a.content_hash)?;
        String::from_utf8(bytes).map_err(|_| precondition(&rec.paper_id, format!("{role} is not UTF-8")))
    }

    fn expect_stage(rec: &PaperRecord, allowed: &[Stage]) -> Result<(), PipelineError> {
        if allowed.contains(&rec.stage) && !rec.is_frozen() {
            return Ok(());
        }
        let names: Vec<&str> = allowed.iter().map(|s| s.as_str()).collect();
        Err(precondition(&rec.paper_id, format!("at {} but this step needs {}", rec.stage, names.join(" or "))))
    }

    fn invoke(
        &self,
        pid: &PaperId,
        role: TemplateRole,
        bindings: &[(&str, String)],
        output: Option<ArtifactRole>,
        clock: &dyn Clock,
    ) -> Result<AgentResult, PipelineError> {
        let template = self.templates.get(role);
        let map: BTreeMap<String, String> = bindings.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        let prompt = template.render(&map)?;
        let ctx = InvokeContext { ledger: &self.ledger, clock, adapter: self.adapter.as_ref(), retry: self.settings.retry };
        Ok(invoke_agent(&ctx, pid, self.roster.get(role), template, &prompt, output)?)
    }

    fn reopen(&self, pid: &PaperId, rec: &PaperRecord, roles: &[ArtifactRole], clock: &dyn Clock) -> Result<(), PipelineError> {
        let bound: Vec<ArtifactRole> = roles.iter().copied().filter(|r| rec.artifact(*r).is_some()).collect();
        if !bound.is_empty() {
            self.ledger.append(NewEvent::for_paper(clock.now(), pid, Action::Reopen { roles: bound }, Actor::System))?;
        }
        Ok(())
    }

    pub fn register_dataset(&self, fixture: &DatasetFixture, at: Timestamp) -> Result<DatasetRecord, PipelineError> {
        Ok(intake::register_dataset(
            &self.ledger,
            &fixture.url,
            fixture.track,
            &fixture.license,
            fixture.dua.clone(),
            at,
            Actor::System,
        )?)
    }

    /// Registers a paper on a dataset and binds the dataset description.
    pub fn register_paper(
        &self,
        pid: &PaperId,
        dataset: &DatasetId,
        meta: &DatasetMeta,
        clock: &dyn Clock,
    ) -> Result<(), PipelineError> {
        let at = clock.now();
        let action = Action::RegisterPaper { track: pid.track(), dataset_id: dataset.clone() };
        self.ledger.append(NewEvent::for_paper(at, pid, action, Actor::System))?;
        let json = serde_json::to_string_pretty(meta).expect("meta serializes");
        self.ledger.put_artifact(pid, ArtifactRole::DatasetMeta, json.as_bytes(), at, Actor::System)?;
        Ok(())
    }

    /// Moves a paper forward after checking every gate condition under the
    /// ledger lock.
    pub fn advance(&self, pid: &PaperId, to: Stage, clock: &dyn Clock) -> Result<Stage, PipelineError> {
        let from = self.record(pid)?.stage;
        let ev = NewEvent::for_paper(clock.now(), pid, Action::Advance { from, to }, Actor::System);
        self.ledger.append_guarded(ev, |st| {
            let rec = st.paper(pid).ok_or_else(|| LedgerError::UnknownPaper(pid.to_string()))?;
            check_advance(st, rec, to)
        })?;
        Ok(to)
    }

    pub fn regress(&self, pid: &PaperId, to: Stage, reason: &str, clock: &dyn Clock) -> Result<Stage, PipelineError> {
        let from = self.record(pid)?.stage;
        let action = Action::Regress { from, to, reason: reason.to_string() };
        self.ledger.append(NewEvent::for_paper(clock.now(), pid, action, Actor::System))?;
        Ok(to)
    }

    /// Records a human checkpoint decision and applies its routing.
    pub fn record_gate(&self, a: &GateApproval) -> Result<Stage, PipelineError> {
        let pid = &a.paper_id;
        let action = Action::Gate { gate: a.gate, decision: a.decision, approver: a.approver.clone(), note: a.note.clone() };
        self.ledger.append_guarded(NewEvent::for_paper(a.timestamp, pid, action, Actor::Human), |st| {
            let rec = st.paper(pid).ok_or_else(|| LedgerError::UnknownPaper(pid.to_string()))?;
            check_gate(st, rec, a.gate, a.decision)
        })?;
        if a.decision == GateDecision::Reject {
            match a.gate {
                Gate::DatasetClearance => {
                    let reason = format!("dataset clearance rejected by {}", a.approver);
                    self.ledger.append(NewEvent::for_paper(a.timestamp, pid, Action::Close { reason }, Actor::Human))?;
                }
                Gate::RevisionValidation => {
                    let origin = self.record(pid)?.revision_origin.expect("Revised implies an origin");
                    let action = Action::Regress { from: Stage::Revised, to: origin, reason: format!("revision rejected: {}", a.note) };
                    self.ledger.append(NewEvent::for_paper(a.timestamp, pid, action, Actor::Human))?;
                }
                Gate::ReleaseApproval => {}
            }
        }
        Ok(self.record(pid)?.stage)
    }

    fn approval(&self, pid: &PaperId, gate: Gate, decision: GateDecision, note: &str, clock: &dyn Clock) -> GateApproval {
        GateApproval {
            paper_id: pid.clone(),
            gate,
            approver: self.settings.approver.clone(),
            timestamp: clock.now(),
            decision,
            note: note.to_string(),
        }
    }

    pub fn generate(&self, pid: &PaperId, clock: &dyn Clock) -> Result<AgentResult, PipelineError> {
        let rec = self.record(pid)?;
        Self::expect_stage(&rec, &[Stage::Registered])?;
        if !rec.gate_approved(Gate::DatasetClearance) {
            return Err(unmet(&rec, "dataset_clearance approval").into());
        }
        let snap = self.ledger.snapshot();
        let ds = snap.dataset(&rec.dataset_id).ok_or_else(|| LedgerError::UnknownDataset(rec.dataset_id.to_string()))?;
        let meta: DatasetMeta = serde_json::from_str(&self.text(&rec, ArtifactRole::DatasetMeta)?)
            .map_err(|e| precondition(pid, format!("dataset_meta: {e}")))?;
        let res = self.invoke(
            pid,
            TemplateRole::Generation,
            &[
                ("track", pid.track().display_name().to_string()),
                ("paper_id", pid.to_string()),
                ("dataset_title", meta.title.clone()),
                ("dataset_url", ds.url.clone()),
                ("dataset_description", meta.description.clone()),
                ("variables", meta.variables.join(", ")),
            ],
            Some(ArtifactRole::Draft),
            clock,
        )?;
        let doc = Document::parse(&res.output_text)?;
        let title = plain_title(doc.title.as_deref().unwrap_or("Untitled"));
        let pages = latex::estimate_pages(&res.output_text);
        let actor = Actor::Agent(res.agent.agent_id.clone());
        self.ledger.append(NewEvent::for_paper(clock.now(), pid, Action::Manuscript { title, pages }, actor))?;
        self.advance(pid, Stage::Drafted, clock)?;
        Ok(res)
    }

    /// Both reviews of the draft, or of the revision during a re-review.
    pub fn review(&self, pid: &PaperId, clock: &dyn Clock) -> Result<(), PipelineError> {
        let rec = self.record(pid)?;
        Self::expect_stage(&rec, &[Stage::Drafted, Stage::Revised])?;
        let manuscript = if rec.stage == Stage::Revised {
            if rec.revision_origin != Some(Stage::TriageRevise) || rec.re_reviews >= 1 {
                return Err(precondition(pid, "re-review needs a first Revise triage"));
            }
            self.reopen(pid, &rec, &[ArtifactRole::Review1, ArtifactRole::Review2], clock)?;
            self.text(&rec, ArtifactRole::Revised)?
        } else {
            self.text(&rec, ArtifactRole::Draft)?
        };
        let author = self.roster.get(TemplateRole::Generation);
        let (r1, r2) = (self.roster.get(TemplateRole::Reviewer1), self.roster.get(TemplateRole::Reviewer2));
        let coi = check_coi(author, r1).and_then(|_| check_coi(author, r2)).and_then(|_| check_coi(r1, r2));
        let action = Action::Coi {
            generator: author.agent_id.clone(),
            reviewers: vec![r1.agent_id.clone(), r2.agent_id.clone()],
            ok: coi.is_ok(),
        };
        self.ledger.append(NewEvent::for_paper(clock.now(), pid, action, Actor::System))?;
        coi?;
        let bind = [("paper_id", pid.to_string()), ("manuscript", manuscript)];
        let o1 = self.invoke(pid, TemplateRole::Reviewer1, &bind, Some(ArtifactRole::Review1), clock)?;
        parse_review_r1(&o1.output_text)?;
        let o2 = self.invoke(pid, TemplateRole::Reviewer2, &bind, Some(ArtifactRole::Review2), clock)?;
        parse_review_r2(&o2.output_text)?;
        self.advance(pid, Stage::Reviewed, clock)?;
        Ok(())
    }

    pub fn triage(&self, pid: &PaperId, clock: &dyn Clock) -> Result<TriageDecision, PipelineError> {
        let rec = self.record(pid)?;
        Self::expect_stage(&rec, &[Stage::Reviewed])?;
        let r1 = parse_review_r1(&self.text(&rec, ArtifactRole::Review1)?)?;
        let r2 = parse_review_r2(&self.text(&rec, ArtifactRole::Review2)?)?;
        let o = triage(&r1, &r2, &self.settings.triage);
        let action = Action::Triage {
            r1_score: o.r1_score,
            r1_recommendation: r1.recommendation,
            r2_score: o.r2_score_normalized,
            r2_verdict: r2.verdict,
            total: o.total,
            decision: o.decision,
        };
        self.ledger.append(NewEvent::for_paper(clock.now(), pid, action, Actor::System))?;
        self.advance(pid, decision_stage(o.decision), clock)?;
        Ok(o.decision)
    }

    /// Produces and checks the revision and response letter, entering
    /// Revised. The outcome feeds the revision_validation gate.
    pub fn revise(&self, pid: &PaperId, clock: &dyn Clock) -> Result<RevisionOutcome, PipelineError> {
        let rec = self.record(pid)?;
        Self::expect_stage(&rec, &[Stage::TriageAccept, Stage::TriageRevise])?;
        let base = match rec.artifact(ArtifactRole::Revised) {
            Some(_) => latex::accept_red(&self.text(&rec, ArtifactRole::Revised)?)?,
            None => self.text(&rec, ArtifactRole::Draft)?,
        };
        self.reopen(pid, &rec, &[ArtifactRole::Revised, ArtifactRole::ResponseLetter], clock)?;
        let (r1t, r2t) = (self.text(&rec, ArtifactRole::Review1)?, self.text(&rec, ArtifactRole::Review2)?);
        let rev = self.invoke(
            pid,
            TemplateRole::Revision,
            &[("paper_id", pid.to_string()), ("manuscript", base.clone()), ("review1", r1t.clone()), ("review2", r2t.clone())],
            Some(ArtifactRole::Revised),
            clock,
        )?;
        let letter = self.invoke(
            pid,
            TemplateRole::ResponseLetter,
            &[("paper_id", pid.to_string()), ("review1", r1t.clone()), ("review2", r2t.clone()), ("revised", rev.output_text.clone())],
            Some(ArtifactRole::ResponseLetter),
            clock,
        )?;
        let mut problems = Vec::new();
        let mut warnings = Vec::new();
        match validate_markup(&base, &rev.output_text) {
            Err(e) => problems.extend(e.problems.iter().map(|p| p.to_string())),
            Ok(bundle) => {
                for v in check_no_bullets(&bundle) {
                    problems.push(format!("{} list added in {} at byte {}", v.environment, v.section, v.offset));
                }
                let exp = measure_expansion(&bundle, &["methodology", "discussion"]);
                warnings.extend(exp.warnings);
                warnings.extend(exp.undefined.iter().map(|s| format!("{s}: empty in the original")));
                match parse_response_letter(&letter.output_text) {
                    Err(e) => problems.push(format!("response letter: {e}")),
                    Ok(l) => {
                        let rep = validate_response_letter(&l, &parse_review_r1(&r1t)?, &parse_review_r2(&r2t)?, &bundle);
                        problems.extend(rep.unmapped.iter().map(|(who, c)| format!("unmapped {who:?} comment: {c}")));
                        problems.extend(rep.dangling_refs.iter().map(|s| format!("letter names unknown section {s}")));
                        problems.extend(rep.unsupported_full.iter().map(|s| format!("fully addressed without an edit: {s}")));
                    }
                }
            }
        }
        self.advance(pid, Stage::Revised, clock)?;
        let passed = problems.is_empty();
        self.ledger.append(NewEvent::for_paper(
            clock.now(),
            pid,
            Action::RevisionCheck { passed, problems: problems.clone() },
            Actor::System,
        ))?;
        Ok(RevisionOutcome { passed, problems, warnings })
    }

    /// Locks a fictional author set, avoiding names already used by any
    /// other paper in the ledger.
    pub fn assign_authors(&self, pid: &PaperId, clock: &dyn Clock) -> Result<FictionalAuthorSet, PipelineError> {
        let rec = self.record(pid)?;
        if let Some(set) = &rec.authors {
            return Ok(set.clone());
        }
        let prior: BTreeSet<String> = self
            .ledger
            .snapshot()
            .papers
            .values()
            .filter_map(|p| p.authors.as_ref())
            .flat_map(|s| s.names().into_iter().map(String::from))
            .collect();
        let set = assign_fictional_authors(&self.names, &self.tokens, &self.denylist, self.settings.seed, pid, &prior)?;
        let action = Action::Authors { set: Box::new(set.clone()) };
        self.ledger.append(NewEvent::for_paper(clock.now(), pid, action, Actor::System))?;
        Ok(set)
    }

    /// Builds and verifies the camera-ready version; enters CameraReady
    /// only when all six checks pass.
    pub fn camera_ready(&self, pid: &PaperId, clock: &dyn Clock) -> Result<CameraReadyReport, PipelineError> {
        let rec = self.record(pid)?;
        Self::expect_stage(&rec, &[Stage::Revised])?;
        if !rec.gate_approved(Gate::RevisionValidation) {
            return Err(unmet(&rec, "revision_validation approval").into());
        }
        let set = self.assign_authors(pid, clock)?;
        let revised = self.text(&rec, ArtifactRole::Revised)?;
        let build_time = clock.now();
        let source = prepare(&revised, pid, rec.track, &set, &build_time)?;
        let title = rec.title.clone().unwrap_or_default();
        let metadata = MetadataSidecar::new(pid, &title, &set, rec.track, &build_time);
        let snap = self.ledger.snapshot();
        let ds = snap.dataset(&rec.dataset_id).ok_or_else(|| LedgerError::UnknownDataset(rec.dataset_id.to_string()))?;
        let report = verify(&CameraReadyInputs {
            source: &source,
            paper_id: pid,
            track: rec.track,
            dataset: ds,
            metadata: &metadata,
            author_set: &set,
            profile: &self.settings.template_profile,
        });
        self.reopen(pid, self.record(pid)?.as_ref(), &[ArtifactRole::CameraReady, ArtifactRole::Metadata], clock)?;
        let at = clock.now();
        self.ledger.put_artifact(pid, ArtifactRole::CameraReady, source.as_bytes(), at, Actor::System)?;
        self.ledger.put_artifact(pid, ArtifactRole::Metadata, metadata.to_json().as_bytes(), at, Actor::System)?;
        let action = Action::CameraReadyReport {
            passed: report.all_pass(),
            failed: report.failed().iter().map(|c| c.to_string()).collect(),
        };
        self.ledger.append(NewEvent::for_paper(clock.now(), pid, action, Actor::System))?;
        if report.all_pass() {
            self.advance(pid, Stage::CameraReady, clock)?;
        }
        Ok(report)
    }

    /// Slides, narration, avatar job and video metadata; enters Presented.
    pub fn present(&self, pid: &PaperId, clock: &dyn Clock) -> Result<NarrationScript, PipelineError> {
        let rec = self.record(pid)?;
        Self::expect_stage(&rec, &[Stage::CameraReady])?;
        let source = self.text(&rec, ArtifactRole::CameraReady)?;
        let version = rec.artifact(ArtifactRole::CameraReady).expect("read above").content_hash.clone();
        let doc = Document::parse(&source)?;
        let wpm = self.settings.words_per_minute;
        let mut plan = plan_slides(&doc, self.settings.budget_s)?;
        let slides = self.invoke(
            pid,
            TemplateRole::Slides,
            &[("paper_id", pid.to_string()), ("outline", plan.outline(wpm)), ("manuscript", source.clone())],
            None,
            clock,
        )?;
        plan.apply_titles(&slides.output_text)?;
        let dangling = check_slide_lineage(&plan, &doc);
        if !dangling.is_empty() {
            return Err(precondition(pid, format!("slides cite missing sections: {}", dangling.join(", "))));
        }
        let narration = self.invoke(
            pid,
            TemplateRole::Narration,
            &[
                ("paper_id", pid.to_string()),
                ("words_per_minute", wpm.to_string()),
                ("outline", plan.outline(wpm)),
                ("manuscript", source.clone()),
            ],
            None,
            clock,
        )?;
        let script = segment_narration(&narration.output_text, &plan, wpm)?;
        if !script.is_contiguous() {
            return Err(precondition(pid, "narration blocks are not contiguous"));
        }
        let job = build_avatar_job(
            &plan,
            &script,
            self.settings.avatar.clone(),
            self.settings.consent.clone(),
            pid,
            rec.track,
            version.clone(),
            &self.settings.resolution,
        )?;
        let video = serde_json::json!({
            "paper_id": pid,
            "track": rec.track.code(),
            "duration_s": script.total_s(),
            "slides": plan.slides.len(),
            "label": AVATAR_LABEL,
            "resolution": self.settings.resolution,
            "version_hash": version,
        });
        let roles = [ArtifactRole::Slides, ArtifactRole::Narration, ArtifactRole::AvatarJob, ArtifactRole::VideoMeta];
        self.reopen(pid, &rec, &roles, clock)?;
        let at = clock.now();
        let outputs = [
            plan.to_json(),
            script.to_json(),
            job.to_json(),
            serde_json::to_string_pretty(&video).expect("json value serializes"),
        ];
        for (role, body) in roles.into_iter().zip(outputs) {
            self.ledger.put_artifact(pid, role, body.as_bytes(), at, Actor::System)?;
        }
        self.advance(pid, Stage::Presented, clock)?;
        Ok(script)
    }

    /// Podcast feed, manifest, publication and post-release audit for every
    /// paper at Presented that has not already passed an audit.
    pub fn release(&self, publish_dir: &Path, clock: &dyn Clock) -> Result<ReleaseOutcome, PipelineError> {
        let snap = self.ledger.snapshot();
        let eligible: Vec<&PaperRecord> =
            snap.papers.values().map(|p| p.as_ref()).filter(|p| p.stage == Stage::Presented && !p.is_frozen() && p.audit_passed != Some(true))
            .collect();
        let ids: Vec<PaperId> = eligible.iter().map(|p| p.paper_id.clone()).collect();
        let mut episodes = Vec::new();
        for track in Track::ALL {
            let papers: Vec<&&PaperRecord> = eligible.iter().filter(|p| p.track == track).collect();
            if papers.is_empty() {
                continue;
            }
            let mut transcript = String::new();
            let mut duration = 0.0;
            for p in &papers {
                let script: NarrationScript = serde_json::from_str(&self.text(p, ArtifactRole::Narration)?)
                    .map_err(|e| precondition(&p.paper_id, format!("narration: {e}")))?;
                duration += script.total_s();
                transcript.push_str(&format!("# {}\n", p.paper_id));
                for b in &script.blocks {
                    transcript.push_str(&b.text);
                    transcript.push('\n');
                }
            }
            episodes.push(Episode {
                track,
                title: format!("{} track", track.display_name()),
                description: format!(
                    "Talks for {}",
                    papers.iter().map(|p| p.paper_id.to_string()).collect::<Vec<_>>().join(", ")
                ),
                duration_s: duration,
                transcript_ref: self.ledger.put_blob(transcript.as_bytes())?,
            });
        }
        let feed = emit_podcast_feed("HIKMA proceedings podcast", episodes)?;
        let at = clock.now();
        let feed_hash = archive::record_release_document(&self.ledger, PODCAST_NAME, feed.to_json().as_bytes(), at)?;
        let manifest =
            archive::build_manifest(&self.ledger, &ids, &[(PODCAST_NAME, feed_hash)], &self.settings.release, at)?;
        archive::record_manifest(&self.ledger, &manifest, clock.now())?;
        std::fs::create_dir_all(publish_dir).map_err(ArchiveError::Io)?;
        archive::publish(&self.ledger, &manifest, publish_dir)?;
        let report = archive::audit(&manifest, publish_dir)?;
        archive::record_audit(&self.ledger, &manifest, &report, clock.now())?;
        Ok(ReleaseOutcome { manifest, report })
    }

    /// Archives every Presented paper whose audit passed and whose release
    /// was approved.
    pub fn archive_approved(&self, clock: &dyn Clock) -> Result<Vec<PaperId>, PipelineError> {
        let ready: Vec<PaperId> = self
            .ledger
            .snapshot()
            .papers
            .values()
            .filter(|p| p.stage == Stage::Presented && p.audit_passed == Some(true) && p.gate_approved(Gate::ReleaseApproval))
            .map(|p| p.paper_id.clone())
            .collect();
        for pid in &ready {
            self.advance(pid, Stage::Archived, clock)?;
        }
        Ok(ready)
    }

    /// Records an approval decision by the configured approver.
    pub fn approve(&self, pid: &PaperId, gate: Gate, decision: GateDecision, note: &str, clock: &dyn Clock) -> Result<Stage, PipelineError> {
        self.record_gate(&self.approval(pid, gate, decision, note, clock))
    }

    /// Proceedings for every archived paper, stored as a release document.
    pub fn proceedings(&self, clock: &dyn Clock) -> Result<archive::Proceedings, PipelineError> {
        let ids: Vec<PaperId> =
            self.ledger.snapshot().papers.values().filter(|p| p.stage == Stage::Archived).map(|p| p.paper_id.clone()).collect();
        let p = archive::emit_proceedings(&self.ledger, &ids, &self.settings.release)?;
        archive::record_release_document(&self.ledger, PROCEEDINGS_NAME, p.to_json().as_bytes(), clock.now())?;
        Ok(p)
    }
}

fn read(p: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.into(), source })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperFailure {
    pub paper_id: String,
    pub phase: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub datasets: usize,
    pub papers: usize,
    pub drafts: usize,
    pub reviews: usize,
    pub by_stage: BTreeMap<String, usize>,
    pub archived: usize,
    pub failures: Vec<PaperFailure>,
    pub manifest_hash: Option<ContentHash>,
    pub audit_passed: Option<bool>,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    fn tally(ledger: &Ledger) -> Self {
        let snap = ledger.snapshot();
        let mut s = RunSummary { datasets: snap.datasets.len(), papers: snap.papers.len(), ..Default::default() };
        for p in snap.papers.values() {
            *s.by_stage.entry(p.stage.to_string()).or_default() += 1;
        }
        s.archived = s.by_stage.get("Archived").copied().unwrap_or(0);
        for ev in ledger.events() {
            if let Action::Invoke { role, .. } = ev.action {
                match role {
                    TemplateRole::Generation => s.drafts += 1,
                    TemplateRole::Reviewer1 | TemplateRole::Reviewer2 => s.reviews += 1,
                    _ => {}
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub start: Timestamp,
    pub parallelism: usize,
    pub publish_dir: PathBuf,
}

fn panic_text(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

type Step<'a> = &'a (dyn Fn(&PaperId, &SimulatedClock) -> Result<(), PipelineError> + Sync);

/// Runs `step` for each live paper in parallel. A failing or panicking
/// paper is recorded and dropped from later phases.
fn phase(
    pool: &rayon::ThreadPool,
    name: &str,
    live: &mut Vec<(PaperId, Arc<SimulatedClock>)>,
    failures: &mut Vec<PaperFailure>,
    step: Step<'_>,
) {
    let results: Vec<Result<(), String>> = pool.install(|| {
        live.par_iter()
            .map(|(pid, clock)| match catch_unwind(AssertUnwindSafe(|| step(pid, clock))) {
                Ok(Ok(())) => Ok(()),
                Ok(Err(e)) => Err(e.to_string()),
                Err(p) => Err(PipelineError::Panic(panic_text(p)).to_string()),
            })
            .collect()
    });
    let mut keep = Vec::with_capacity(live.len());
    for (entry, r) in live.drain(..).zip(results) {
        match r {
            Ok(()) => keep.push(entry),
            Err(error) => failures.push(PaperFailure { paper_id: entry.0.to_string(), phase: name.into(), error }),
        }
    }
    *live = keep;
}

/// Drives every dataset through the whole pipeline.
///
/// Papers advance in parallel, each on its own simulated clock. Author
/// assignment and the release run sequentially in paper-id order, so the
/// result does not depend on scheduling.
pub fn run_pipeline(engine: &Engine, fixtures: &[DatasetFixture], opts: &RunOptions) -> Result<RunSummary, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallelism.max(1))
        .build()
        .map_err(|e| PipelineError::Panic(format!("thread pool: {e}")))?;
    let mut failures = Vec::new();
    let mut live: Vec<(PaperId, Arc<SimulatedClock>)> = Vec::new();
    let mut serials: BTreeMap<Track, u32> = BTreeMap::new();
    for fx in fixtures {
        let serial = serials.entry(fx.track).or_insert(0);
        *serial += 1;
        let pid = PaperId::new(fx.track, *serial);
        let clock = Arc::new(SimulatedClock::starting_at(opts.start));
        let registered = (|| -> Result<(), PipelineError> {
            let ds = engine.register_dataset(fx, opts.start)?;
            engine.register_paper(&pid, &ds.dataset_id, &fx.meta, clock.as_ref())?;
            let decision = if ds.cleared_for_use() { GateDecision::Approve } else { GateDecision::Reject };
            let note = if ds.cleared_for_use() { "license and DUA cleared" } else { "unresolved IP restrictions" };
            engine.record_gate(&engine.approval(&pid, Gate::DatasetClearance, decision, note, clock.as_ref()))?;
            Ok(())
        })();
        match registered {
            Ok(()) if engine.record(&pid)?.closed.is_none() => live.push((pid, clock)),
            Ok(()) => {}
            Err(e) => failures.push(PaperFailure { paper_id: pid.to_string(), phase: "register".into(), error: e.to_string() }),
        }
    }

    let through_revision = |pid: &PaperId, clock: &SimulatedClock| -> Result<(), PipelineError> {
        engine.generate(pid, clock)?;
        loop {
            engine.review(pid, clock)?;
            if engine.triage(pid, clock)? == TriageDecision::Reject {
                return Ok(());
            }
            let outcome = engine.revise(pid, clock)?;
            let (decision, note) = if outcome.passed {
                (GateDecision::Approve, "revision checks passed".to_string())
            } else {
                (GateDecision::Reject, outcome.problems.join("; "))
            };
            engine.record_gate(&engine.approval(pid, Gate::RevisionValidation, decision, &note, clock))?;
            if !outcome.passed {
                return Err(precondition(pid, format!("revision rejected: {note}")));
            }
            let rec = engine.record(pid)?;
            if !(rec.revision_origin == Some(Stage::TriageRevise) && rec.re_reviews == 0) {
                return Ok(());
            }
        }
    };
    phase(&pool, "review-and-revision", &mut live, &mut failures, &through_revision);
    live.retain(|(pid, _)| engine.ledger.paper(pid).is_some_and(|r| r.stage == Stage::Revised));

    // Sequential, so that names already taken are a fixed function of order.
    let mut kept = Vec::new();
    for (pid, clock) in live.drain(..) {
        match engine.assign_authors(&pid, clock.as_ref()) {
            Ok(_) => kept.push((pid, clock)),
            Err(e) => failures.push(PaperFailure { paper_id: pid.to_string(), phase: "authors".into(), error: e.to_string() }),
        }
    }
    live = kept;

    let to_presented = |pid: &PaperId, clock: &SimulatedClock| -> Result<(), PipelineError> {
        let report = engine.camera_ready(pid, clock)?;
        if !report.all_pass() {
            let failed: Vec<String> = report.failed().iter().map(|c| c.to_string()).collect();
            return Err(precondition(pid, format!("camera-ready checks failed: {}", failed.join(", "))));
        }
        engine.present(pid, clock)?;
        Ok(())
    };
    phase(&pool, "camera-ready-and-presentation", &mut live, &mut failures, &to_presented);

    let mut summary_manifest = None;
    let mut summary_audit = None;
    if !live.is_empty() {
        let latest = live.iter().map(|(_, c)| c.peek()).max().expect("non-empty");
        let release_clock = SimulatedClock::starting_at(latest);
        let outcome = engine.release(&opts.publish_dir, &release_clock)?;
        for (pid, _) in &live {
            let ok = outcome.report.passed_for(pid.as_str());
            let (decision, note) = if ok { (GateDecision::Approve, "audit matched") } else { (GateDecision::Reject, "audit discrepancy") };
            let step = engine
                .record_gate(&engine.approval(pid, Gate::ReleaseApproval, decision, note, &release_clock))
                .and_then(|_| if ok { engine.advance(pid, Stage::Archived, &release_clock).map(|_| ()) } else { Ok(()) });
            if let Err(e) = step {
                failures.push(PaperFailure { paper_id: pid.to_string(), phase: "release".into(), error: e.to_string() });
            }
        }
        engine.proceedings(&release_clock)?;
        summary_manifest = Some(outcome.manifest.manifest_hash.clone());
        summary_audit = Some(outcome.report.passed());
    }

    let mut summary = RunSummary::tally(&engine.ledger);
    failures.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
    summary.failures = failures;
    summary.manifest_hash = summary_manifest;
    summary.audit_passed = summary_audit;
    Ok(summary)
}

/// Engine plus run from a config file's settings.
pub fn run_from_config(config: &Config, publish_dir: &Path) -> Result<(Engine, RunSummary), PipelineError> {
    let engine = Engine::from_config(config)?;
    let fixtures = match &config.datasets {
        Some(p) => super::config::parse_dataset_fixtures(&read(p)?)?,
        None => super::config::shipped_datasets(),
    };
    let opts = RunOptions { start: config.start()?, parallelism: config.parallelism, publish_dir: publish_dir.to_path_buf() };
    let summary = run_pipeline(&engine, &fixtures, &opts)?;
    Ok((engine, summary))
}

