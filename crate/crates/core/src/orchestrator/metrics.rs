use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::archive;
use crate::ledger::{Actor, Ledger};
use crate::stage::Stage;
use crate::track::PaperId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub count: usize,
    pub mean_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

impl DurationStats {
    fn of(samples: &[f64]) -> Self {
        let sum: f64 = samples.iter().sum();
        DurationStats {
            count: samples.len(),
            mean_s: sum / samples.len() as f64,
            min_s: samples.iter().copied().fold(f64::INFINITY, f64::min),
            max_s: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineMetrics {
    /// Papers that reached Archived.
    pub throughput: usize,
    /// Seconds from entering the previous stage to entering this one.
    pub turnaround_s: BTreeMap<Stage, DurationStats>,
    /// Human-actor share of the stage-changing and gate events.
    pub human_load: f64,
    /// Share of release-eligible artifacts whose published copy was verified.
    pub audit_coverage: f64,
}

impl PipelineMetrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

pub fn compute_metrics(ledger: &Ledger) -> PipelineMetrics {
    let snap = ledger.snapshot();
    let events = ledger.events();

    let mut entered: HashMap<PaperId, (Stage, chrono::DateTime<chrono::Utc>)> = HashMap::new();
    let mut samples: BTreeMap<Stage, Vec<f64>> = BTreeMap::new();
    let (mut human, mut relevant) = (0usize, 0usize);
    for ev in &events {
        if ev.action.is_gate_relevant() {
            relevant += 1;
            if ev.actor == Actor::Human {
                human += 1;
            }
        }
        let (Some(pid), Some(stage)) = (ev.paper_id(), ev.stage) else { continue };
        match entered.get(pid) {
            Some((prev, at)) if *prev != stage => {
                let secs = (ev.timestamp - *at).num_milliseconds() as f64 / 1000.0;
                samples.entry(stage).or_default().push(secs);
                entered.insert(pid.clone(), (stage, ev.timestamp));
            }
            Some(_) => {}
            None => {
                entered.insert(pid.clone(), (stage, ev.timestamp));
            }
        }
    }

    let manifest = archive::latest_manifest(ledger).ok().flatten();
    let (mut verified, mut eligible) = (0usize, 0usize);
    for p in snap.papers.values().filter(|p| p.stage.order() >= Stage::Presented.order()) {
        eligible += p.artifact_refs.len();
        if p.audit_passed != Some(true) {
            continue;
        }
        if let Some(m) = &manifest {
            verified += p
                .artifact_refs
                .values()
                .filter(|a| m.entries.iter().any(|e| e.paper_id == p.paper_id.as_str() && e.content_hash == a.content_hash))
                .count();
        }
    }

    PipelineMetrics {
        throughput: snap.papers.values().filter(|p| p.stage == Stage::Archived).count(),
        turnaround_s: samples.into_iter().map(|(s, v)| (s, DurationStats::of(&v))).collect(),
        human_load: ratio(human, relevant),
        audit_coverage: ratio(verified, eligible),
    }
}
