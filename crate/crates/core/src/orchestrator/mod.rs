//! Stage machine driver, human gates, batch runner and metrics.

pub mod config;
mod gate;
mod metrics;
pub mod pipeline;

pub use config::{AdapterKind, AgentSpec, Config, ConfigError, DatasetFixture};
pub use gate::{Gate, GateApproval, GateDecision};
pub use metrics::{compute_metrics, DurationStats, PipelineMetrics};
pub use pipeline::{
    check_advance, run_from_config, run_pipeline, AgentRoster, Engine, PaperFailure, PipelineError, ReleaseOutcome,
    RevisionOutcome, RunOptions, RunSummary, Settings,
};
