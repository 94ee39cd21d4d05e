//! Provenance-tracked pipeline for AI-generated conference papers: dataset
//! intake, generation, review, revision, camera-ready checks, presentation
//! planning and archival release, all recorded in an append-only ledger.

pub mod agents;
pub mod archive;
pub mod camera_ready;
pub mod clock;
pub mod digest;
pub mod intake;
pub mod latex;
pub mod ledger;
pub mod orchestrator;
pub mod presentation;
pub mod review;
pub mod revision;
pub mod score;
pub mod stage;
pub mod track;
