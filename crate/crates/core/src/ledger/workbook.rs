//! CSV export of the per-track tracking workbook.

use serde::{Deserialize, Serialize};

use super::record::{LedgerState, PaperRecord};
use crate::track::Track;

pub const HEADERS: [&str; 14] = [
    "Track",
    "Paper ID",
    "Dataset (link)",
    "Output Paper Title",
    "Pages",
    "Time (hrs)",
    "Rev 1 Score",
    "Rev 1 Decision",
    "Rev 2 Score",
    "Rev 2 Decision",
    "Total Score (0\u{2013}10)",
    "Initial Decision",
    "Revised Paper / Response Letter",
    "Final Decision",
];

/// One workbook row, kept as rendered cell text so parsing and
/// re-rendering is lossless.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkbookRow {
    pub track: String,
    pub paper_id: String,
    pub dataset_link: String,
    pub title: String,
    pub pages: String,
    pub time_hrs: String,
    pub rev1_score: String,
    pub rev1_decision: String,
    pub rev2_score: String,
    pub rev2_decision: String,
    pub total_score: String,
    pub initial_decision: String,
    pub revised_response: String,
    pub final_decision: String,
}

impl WorkbookRow {
    pub fn from_record(state: &LedgerState, rec: &PaperRecord) -> Self {
        let yes_no = |b: bool| if b { "YES" } else { "NO" };
        let triage = rec.triage.as_ref().or(rec.first_triage.as_ref());
        WorkbookRow {
            track: rec.track.display_name().to_string(),
            paper_id: rec.paper_id.to_string(),
            dataset_link: state.dataset(&rec.dataset_id).map(|d| d.url.clone()).unwrap_or_default(),
            title: rec.title.clone().unwrap_or_default(),
            pages: rec.pages.map(|p| p.to_string()).unwrap_or_default(),
            time_hrs: rec.generation_hours().map(|h| format!("{h:.1}")).unwrap_or_default(),
            rev1_score: triage.map(|t| t.r1_score.to_string()).unwrap_or_default(),
            rev1_decision: triage.map(|t| t.r1_recommendation.label().to_string()).unwrap_or_default(),
            rev2_score: triage.map(|t| t.r2_score.to_string()).unwrap_or_default(),
            rev2_decision: triage.map(|t| t.r2_verdict.label().to_string()).unwrap_or_default(),
            total_score: triage.map(|t| t.total.to_string()).unwrap_or_default(),
            initial_decision: rec.decisions.initial.map(|d| d.label().to_string()).unwrap_or_default(),
            revised_response: format!("{} / {}", yes_no(rec.revised_paper()), yes_no(rec.response_letter())),
            final_decision: rec.decisions.final_decision.label().to_string(),
        }
    }

    fn cells(&self) -> [&str; 14] {
        [
            &self.track,
            &self.paper_id,
            &self.dataset_link,
            &self.title,
            &self.pages,
            &self.time_hrs,
            &self.rev1_score,
            &self.rev1_decision,
            &self.rev2_score,
            &self.rev2_decision,
            &self.total_score,
            &self.initial_decision,
            &self.revised_response,
            &self.final_decision,
        ]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorkbookError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected header row")]
    Header,
}

pub fn rows(state: &LedgerState, track: Track) -> Vec<WorkbookRow> {
    state.papers_in_track(track).map(|p| WorkbookRow::from_record(state, p)).collect()
}

pub fn export(state: &LedgerState, track: Track) -> String {
    render(&rows(state, track))
}

pub fn render(rows: &[WorkbookRow]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(HEADERS).expect("writing to memory");
    for r in rows {
        w.write_record(r.cells()).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv of utf-8 cells is utf-8")
}

pub fn parse(text: &str) -> Result<Vec<WorkbookRow>, WorkbookError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    if r.headers()?.iter().ne(HEADERS.iter().copied()) {
        return Err(WorkbookError::Header);
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let c = |i: usize| rec.get(i).unwrap_or_default().to_string();
        out.push(WorkbookRow {
            track: c(0),
            paper_id: c(1),
            dataset_link: c(2),
            title: c(3),
            pages: c(4),
            time_hrs: c(5),
            rev1_score: c(6),
            rev1_decision: c(7),
            rev2_score: c(8),
            rev2_decision: c(9),
            total_score: c(10),
            initial_decision: c(11),
            revised_response: c(12),
            final_decision: c(13),
        });
    }
    Ok(out)
}
