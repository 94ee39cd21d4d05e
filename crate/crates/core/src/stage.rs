//! Paper lifecycle stages and the legal-transition graph.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Registered,
    Drafted,
    Reviewed,
    TriageAccept,
    TriageRevise,
    TriageReject,
    Revised,
    CameraReady,
    Presented,
    Archived,
}

/// How a transition relates to forward pipeline progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    Forward,
    /// `Revised -> Reviewed`: the single re-review cycle after a Revise triage.
    ReReview,
    /// Stage regression after a failed gate or check.
    Regression,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Registered,
        Stage::Drafted,
        Stage::Reviewed,
        Stage::TriageAccept,
        Stage::TriageRevise,
        Stage::TriageReject,
        Stage::Revised,
        Stage::CameraReady,
        Stage::Presented,
        Stage::Archived,
    ];

    /// Position in pipeline order; the three triage outcomes share a slot.
    pub fn order(self) -> u8 {
        match self {
            Stage::Registered => 0,
            Stage::Drafted => 1,
            Stage::Reviewed => 2,
            Stage::TriageAccept | Stage::TriageRevise | Stage::TriageReject => 3,
            Stage::Revised => 4,
            Stage::CameraReady => 5,
            Stage::Presented => 6,
            Stage::Archived => 7,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::TriageReject)
    }

    pub fn is_triage(self) -> bool {
        matches!(self, Stage::TriageAccept | Stage::TriageRevise | Stage::TriageReject)
    }

    /// Classifies `self -> to`, or `None` when the edge is not in the graph.
    ///
    /// Context-dependent restrictions (re-review only once and only after a
    /// Revise triage; regression back to the triage slot the paper came
    /// from) are enforced by the ledger on top of this graph.
    pub fn transition_kind(self, to: Stage) -> Option<TransitionKind> {
        use Stage::*;
        use TransitionKind::*;
        match (self, to) {
            (Registered, Drafted)
            | (Drafted, Reviewed)
            | (Reviewed, TriageAccept | TriageRevise | TriageReject)
            | (TriageAccept, Revised)
            | (TriageRevise, Revised)
            | (Revised, CameraReady)
            | (CameraReady, Presented)
            | (Presented, Archived) => Some(Forward),
            (Revised, Reviewed) => Some(ReReview),
            (CameraReady, Revised) | (Revised, TriageAccept | TriageRevise) => Some(Regression),
            _ => None,
        }
    }

    pub fn successors(self) -> Vec<Stage> {
        Stage::ALL
            .into_iter()
            .filter(|to| self.transition_kind(*to).is_some())
            .collect()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Registered => "Registered",
            Stage::Drafted => "Drafted",
            Stage::Reviewed => "Reviewed",
            Stage::TriageAccept => "TriageAccept",
            Stage::TriageRevise => "TriageRevise",
            Stage::TriageReject => "TriageReject",
            Stage::Revised => "Revised",
            Stage::CameraReady => "CameraReady",
            Stage::Presented => "Presented",
            Stage::Archived => "Archived",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown stage {0:?}")]
pub struct UnknownStage(pub String);

impl FromStr for Stage {
    type Err = UnknownStage;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let squashed: String = s.chars().filter(|c| c.is_alphanumeric()).collect();
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(&squashed))
            .ok_or_else(|| UnknownStage(s.to_string()))
    }
}
