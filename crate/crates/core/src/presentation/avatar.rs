use serde::{Deserialize, Serialize};

use super::{NarrationScript, SlidePlan};
use crate::digest::ContentHash;
use crate::track::{PaperId, Track};

pub const AVATAR_LABEL: &str = "AI-generated presenter";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum AvatarChoice {
    /// A stock avatar from the rendering service's library.
    Library(String),
    /// An avatar modelled on a real person.
    RealLikeness(String),
}

impl AvatarChoice {
    pub fn id(&self) -> &str {
        match self {
            AvatarChoice::Library(id) | AvatarChoice::RealLikeness(id) => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Consent {
    pub granted: bool,
    pub scope: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedMetadata {
    pub paper_id: PaperId,
    pub track: String,
    pub version_hash: ContentHash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSegment {
    pub slide_index: usize,
    pub start_s: f64,
    pub duration_s: f64,
    pub text: String,
}

/// Render request for an external avatar service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvatarJob {
    pub paper_id: PaperId,
    pub avatar_id: AvatarChoice,
    pub consent: Option<Consent>,
    pub label_text: String,
    pub embed_metadata: EmbedMetadata,
    pub resolution: String,
    pub segments: Vec<JobSegment>,
}

impl AvatarJob {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("job serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AvatarError {
    #[error("real-likeness avatar {0} requires granted consent")]
    ConsentViolation(String),
    #[error("label must contain {AVATAR_LABEL:?}")]
    MissingLabel,
    #[error("script does not cover the slide plan: {0}")]
    ScriptMismatch(String),
}

/// The policy every emitted job must satisfy.
pub fn validate_avatar_job(job: &AvatarJob) -> Result<(), AvatarError> {
    if !job.label_text.contains(AVATAR_LABEL) {
        return Err(AvatarError::MissingLabel);
    }
    if let AvatarChoice::RealLikeness(id) = &job.avatar_id {
        if !job.consent.as_ref().is_some_and(|c| c.granted) {
            return Err(AvatarError::ConsentViolation(id.clone()));
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn build_avatar_job(
    plan: &SlidePlan,
    script: &NarrationScript,
    avatar: AvatarChoice,
    consent: Option<Consent>,
    paper_id: &PaperId,
    track: Track,
    version_hash: ContentHash,
    resolution: &str,
) -> Result<AvatarJob, AvatarError> {
    let plan_idx: Vec<usize> = plan.slides.iter().map(|s| s.index).collect();
    let script_idx: Vec<usize> = script.blocks.iter().map(|b| b.slide_index).collect();
    if plan_idx != script_idx || !script.is_contiguous() {
        return Err(AvatarError::ScriptMismatch(format!("plan {plan_idx:?}, script {script_idx:?}")));
    }
    let job = AvatarJob {
        paper_id: paper_id.clone(),
        avatar_id: avatar,
        consent,
        label_text: format!("{AVATAR_LABEL}: this talk is delivered by a synthetic avatar"),
        embed_metadata: EmbedMetadata { paper_id: paper_id.clone(), track: track.code().to_string(), version_hash },
        resolution: resolution.to_string(),
        segments: script
            .blocks
            .iter()
            .map(|b| JobSegment { slide_index: b.slide_index, start_s: b.start_s, duration_s: b.duration_s, text: b.text.clone() })
            .collect(),
    };
    validate_avatar_job(&job)?;
    Ok(job)
}
