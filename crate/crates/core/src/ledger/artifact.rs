use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::ContentHash;

/// The part an artifact plays in a paper's record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactRole {
    DatasetMeta,
    Draft,
    Review1,
    Review2,
    Revised,
    ResponseLetter,
    CameraReady,
    /// Camera-ready metadata sidecar (authors, institution, watermark time).
    Metadata,
    Slides,
    Narration,
    AvatarJob,
    VideoMeta,
    Manifest,
}

impl ArtifactRole {
    pub const ALL: [ArtifactRole; 13] = [
        ArtifactRole::DatasetMeta,
        ArtifactRole::Draft,
        ArtifactRole::Review1,
        ArtifactRole::Review2,
        ArtifactRole::Revised,
        ArtifactRole::ResponseLetter,
        ArtifactRole::CameraReady,
        ArtifactRole::Metadata,
        ArtifactRole::Slides,
        ArtifactRole::Narration,
        ArtifactRole::AvatarJob,
        ArtifactRole::VideoMeta,
        ArtifactRole::Manifest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactRole::DatasetMeta => "dataset_meta",
            ArtifactRole::Draft => "draft",
            ArtifactRole::Review1 => "review1",
            ArtifactRole::Review2 => "review2",
            ArtifactRole::Revised => "revised",
            ArtifactRole::ResponseLetter => "response_letter",
            ArtifactRole::CameraReady => "camera_ready",
            ArtifactRole::Metadata => "metadata",
            ArtifactRole::Slides => "slides",
            ArtifactRole::Narration => "narration",
            ArtifactRole::AvatarJob => "avatar_job",
            ArtifactRole::VideoMeta => "video_meta",
            ArtifactRole::Manifest => "manifest",
        }
    }

    /// File extension used in the published directory layout.
    pub fn extension(self) -> &'static str {
        match self {
            ArtifactRole::Draft | ArtifactRole::Revised | ArtifactRole::CameraReady => "tex",
            ArtifactRole::Review1
            | ArtifactRole::Review2
            | ArtifactRole::ResponseLetter
            | ArtifactRole::Manifest => "txt",
            ArtifactRole::DatasetMeta
            | ArtifactRole::Metadata
            | ArtifactRole::Slides
            | ArtifactRole::Narration
            | ArtifactRole::AvatarJob
            | ArtifactRole::VideoMeta => "json",
        }
    }

    pub fn default_media_hint(self) -> &'static str {
        match self.extension() {
            "tex" => "text/x-tex",
            "json" => "application/json",
            _ => "text/plain",
        }
    }

    /// Reviews and response letters; subject to the publication policy flag.
    pub fn is_review_material(self) -> bool {
        matches!(self, ArtifactRole::Review1 | ArtifactRole::Review2 | ArtifactRole::ResponseLetter)
    }
}

impl fmt::Display for ArtifactRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown artifact role {0:?}")]
pub struct UnknownRole(pub String);

impl FromStr for ArtifactRole {
    type Err = UnknownRole;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArtifactRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| UnknownRole(s.to_string()))
    }
}

/// Immutable, content-addressed handle to stored artifact bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub role: ArtifactRole,
    pub content_hash: ContentHash,
    pub byte_size: u64,
    pub media_hint: String,
}
