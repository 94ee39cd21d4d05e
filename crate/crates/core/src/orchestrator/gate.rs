use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::track::PaperId;

/// Human checkpoints in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    DatasetClearance,
    RevisionValidation,
    ReleaseApproval,
}

impl Gate {
    pub const ALL: [Gate; 3] = [Gate::DatasetClearance, Gate::RevisionValidation, Gate::ReleaseApproval];

    pub fn as_str(self) -> &'static str {
        match self {
            Gate::DatasetClearance => "dataset_clearance",
            Gate::RevisionValidation => "revision_validation",
            Gate::ReleaseApproval => "release_approval",
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gate {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let n = s.trim().to_ascii_lowercase().replace('-', "_");
        Gate::ALL.into_iter().find(|g| g.as_str() == n).ok_or_else(|| format!("unknown gate {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateDecision {
    Approve,
    Reject,
}

impl fmt::Display for GateDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateDecision::Approve => "approve",
            GateDecision::Reject => "reject",
        })
    }
}

impl FromStr for GateDecision {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "approve" | "approved" => Ok(GateDecision::Approve),
            "reject" | "rejected" => Ok(GateDecision::Reject),
            _ => Err(format!("unknown gate decision {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateApproval {
    pub paper_id: PaperId,
    pub gate: Gate,
    pub approver: String,
    pub timestamp: Timestamp,
    pub decision: GateDecision,
    pub note: String,
}
