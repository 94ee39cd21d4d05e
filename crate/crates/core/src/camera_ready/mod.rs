//! Camera-ready verification: six checks, watermarking and fictional
//! attribution.

mod authors;
mod watermark;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use authors::{
    assign_fictional_authors, AuthorError, Denylist, FictionalAuthor, FictionalAuthorSet, InstitutionTokens, NamePool,
    MAX_INSTITUTION_DRAWS,
};
pub use watermark::{apply_watermark, detect_watermark, remove_watermark, Watermark};

use crate::clock::{format_timestamp, Timestamp};
use crate::intake::DatasetRecord;
use crate::latex::{self, Document, FloatKind, LatexError, Lineage};
use crate::track::{PaperId, Track};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    LatexConformity,
    SectionsComplete,
    CitationIntegrity,
    FigureLineage,
    WatermarkPresent,
    AuthorConsistency,
}

impl CheckName {
    pub const ALL: [CheckName; 6] = [
        CheckName::LatexConformity,
        CheckName::SectionsComplete,
        CheckName::CitationIntegrity,
        CheckName::FigureLineage,
        CheckName::WatermarkPresent,
        CheckName::AuthorConsistency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::LatexConformity => "latex_conformity",
            CheckName::SectionsComplete => "sections_complete",
            CheckName::CitationIntegrity => "citation_integrity",
            CheckName::FigureLineage => "figure_lineage",
            CheckName::WatermarkPresent => "watermark_present",
            CheckName::AuthorConsistency => "author_consistency",
        }
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub passed: bool,
    pub details: Vec<String>,
}

impl CheckResult {
    pub fn pass() -> Self {
        CheckResult { passed: true, details: Vec::new() }
    }

    pub fn from_failures(details: Vec<String>) -> Self {
        CheckResult { passed: details.is_empty(), details }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CameraReadyReport {
    pub checks: BTreeMap<CheckName, CheckResult>,
}

impl CameraReadyReport {
    pub fn all_pass(&self) -> bool {
        CheckName::ALL.iter().all(|c| self.checks.get(c).is_some_and(|r| r.passed))
    }

    pub fn failed(&self) -> Vec<CheckName> {
        CheckName::ALL.into_iter().filter(|c| !self.checks.get(c).is_some_and(|r| r.passed)).collect()
    }
}

/// Which document classes a venue template accepts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateProfile {
    pub name: String,
    pub document_classes: Vec<String>,
}

impl Default for TemplateProfile {
    fn default() -> Self {
        TemplateProfile { name: "hikma-article".into(), document_classes: vec!["article".into()] }
    }
}

pub fn check_latex_conformity(source: &str, profile: &TemplateProfile) -> CheckResult {
    let doc = match Document::parse(source) {
        Ok(d) => d,
        Err(e) => return CheckResult::from_failures(vec![e.to_string()]),
    };
    let mut fails = Vec::new();
    match &doc.document_class {
        Some(c) if profile.document_classes.contains(c) => {}
        Some(c) => fails.push(format!("document class {c:?} not allowed by {}", profile.name)),
        None => fails.push("no \\documentclass".into()),
    }
    if !doc.has_document_env {
        fails.push("no document environment".into());
    }
    if !doc.red_spans.is_empty() {
        fails.push(format!("{} residual red markup span(s)", doc.red_spans.len()));
    }
    CheckResult::from_failures(fails)
}

/// Missing required sections, by canonical name.
pub fn check_sections(source: &str) -> Result<CheckResult, LatexError> {
    let doc = Document::parse(source)?;
    let present = doc.present_required();
    Ok(CheckResult::from_failures(
        latex::REQUIRED_SECTIONS.iter().filter(|s| !present.contains(s)).map(|s| s.to_string()).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationReport {
    pub unresolved_keys: Vec<String>,
    pub entries_without_identifier: Vec<String>,
    /// Warning only.
    pub unreferenced_entries: Vec<String>,
}

impl CitationReport {
    pub fn passed(&self) -> bool {
        self.unresolved_keys.is_empty() && self.entries_without_identifier.is_empty()
    }

    pub fn to_check(&self) -> CheckResult {
        let mut d: Vec<String> = self.unresolved_keys.iter().map(|k| format!("unresolved cite key {k}")).collect();
        d.extend(self.entries_without_identifier.iter().map(|k| format!("entry {k} has no DOI, arXiv id or URL")));
        let mut r = CheckResult::from_failures(d);
        r.details.extend(self.unreferenced_entries.iter().map(|k| format!("warning: entry {k} never cited")));
        r
    }
}

pub fn check_citations(source: &str) -> Result<CitationReport, LatexError> {
    let doc = Document::parse(source)?;
    let bib: BTreeSet<String> = doc.bib_items.iter().map(|b| b.key.clone()).collect();
    let cited = doc.cite_keys();
    Ok(CitationReport {
        unresolved_keys: cited.difference(&bib).cloned().collect(),
        entries_without_identifier: doc.bib_items.iter().filter(|b| b.identifiers.is_empty()).map(|b| b.key.clone()).collect(),
        unreferenced_entries: bib.difference(&cited).cloned().collect(),
    })
}

/// Every figure needs a `%lineage:` comment naming the dataset or a
/// resolvable bibliography key.
pub fn check_figure_lineage(source: &str, dataset: &DatasetRecord) -> Result<CheckResult, LatexError> {
    let doc = Document::parse(source)?;
    let bib: BTreeSet<&str> = doc.bib_items.iter().map(|b| b.key.as_str()).collect();
    let mut fails = Vec::new();
    for (i, f) in doc.floats.iter().filter(|f| f.kind == FloatKind::Figure).enumerate() {
        let name = f.label.clone().unwrap_or_else(|| format!("figure #{}", i + 1));
        match &f.lineage {
            None => fails.push(format!("{name}: no lineage tag")),
            Some(Lineage::Dataset) => {
                if !dataset.cleared_for_use() {
                    fails.push(format!("{name}: dataset {} is not cleared", dataset.dataset_id));
                }
            }
            Some(Lineage::Cited(k)) if !bib.contains(k.as_str()) => {
                fails.push(format!("{name}: lineage key {k} not in bibliography"));
            }
            Some(Lineage::Cited(_)) => {}
            Some(Lineage::Malformed(v)) => fails.push(format!("{name}: malformed lineage tag {v:?}")),
        }
    }
    Ok(CheckResult::from_failures(fails))
}

pub fn check_watermark(source: &str, paper_id: &PaperId, track: Track) -> CheckResult {
    match detect_watermark(source) {
        None => CheckResult::from_failures(vec!["no watermark".into()]),
        Some(w) => {
            let mut fails = Vec::new();
            if w.paper_id != paper_id.as_str() {
                fails.push(format!("watermark names {} not {paper_id}", w.paper_id));
            }
            if w.track_code != track.code() {
                fails.push(format!("watermark track {} not {}", w.track_code, track.code()));
            }
            CheckResult::from_failures(fails)
        }
    }
}

/// Sidecar shipped next to each camera-ready manuscript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataSidecar {
    pub paper_id: PaperId,
    pub title: String,
    pub authors: Vec<String>,
    pub institution: String,
    pub track: String,
    pub watermark_time: String,
}

impl MetadataSidecar {
    pub fn new(paper_id: &PaperId, title: &str, set: &FictionalAuthorSet, track: Track, watermark_time: &Timestamp) -> Self {
        MetadataSidecar {
            paper_id: paper_id.clone(),
            title: title.to_string(),
            authors: set.names().into_iter().map(String::from).collect(),
            institution: set.institution.clone(),
            track: track.code().to_string(),
            watermark_time: format_timestamp(watermark_time),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sidecar serializes")
    }
}

/// The ledger's locked author set must appear verbatim in the manuscript
/// header and the sidecar.
pub fn check_author_consistency(source: &str, metadata: &MetadataSidecar, ledger_set: &FictionalAuthorSet) -> CheckResult {
    let mut fails = Vec::new();
    if !ledger_set.locked {
        fails.push("ledger: author set not locked".into());
    }
    let expected: Vec<String> = ledger_set.names().into_iter().map(String::from).collect();
    match Document::parse(source) {
        Err(e) => fails.push(format!("manuscript: {e}")),
        Ok(doc) => {
            if doc.authors != expected {
                fails.push(format!("authors: manuscript has {:?}, ledger has {expected:?}", doc.authors));
            }
            if doc.affiliations != [ledger_set.institution.clone()] {
                fails.push(format!("institution: manuscript has {:?}, ledger has {:?}", doc.affiliations, ledger_set.institution));
            }
        }
    }
    if metadata.authors != expected {
        fails.push(format!("authors: metadata has {:?}, ledger has {expected:?}", metadata.authors));
    }
    if metadata.institution != ledger_set.institution {
        fails.push(format!("institution: metadata has {:?}, ledger has {:?}", metadata.institution, ledger_set.institution));
    }
    CheckResult::from_failures(fails)
}

/// Replaces the manuscript's author block with the fictional set.
pub fn set_authors(source: &str, set: &FictionalAuthorSet) -> String {
    let masked = latex::mask_comments(source);
    let mut out = String::new();
    let mut cursor = 0;
    // Drop existing \author{...} and \affil{...} commands.
    let re = regex::Regex::new(r"\\(author|affil)\s*(\[[^\]]*\])?\s*\{").expect("static regex");
    for m in re.find_iter(&masked) {
        if m.start() < cursor {
            continue;
        }
        let Some(close) = latex::matching_brace(&masked, m.end() - 1) else { continue };
        out.push_str(&source[cursor..m.start()]);
        cursor = close + 1;
        if source[cursor..].starts_with('\n') {
            cursor += 1;
        }
    }
    out.push_str(&source[cursor..]);
    let block = format!("\\author{{{}}}\n\\affil{{{}}}\n", set.names().join(" \\and "), set.institution);
    let mut out = match out.find("\\begin{document}") {
        Some(at) => format!("{}{block}{}", &out[..at], &out[at..]),
        None => format!("{block}{out}"),
    };
    if !latex::mask_comments(&out).contains("\\usepackage{authblk}") {
        if let Some(at) = out.find('\n').filter(|_| out.starts_with("\\documentclass")) {
            out.insert_str(at + 1, "\\usepackage{authblk}\n");
        }
    }
    out
}

pub struct CameraReadyInputs<'a> {
    pub source: &'a str,
    pub paper_id: &'a PaperId,
    pub track: Track,
    pub dataset: &'a DatasetRecord,
    pub metadata: &'a MetadataSidecar,
    pub author_set: &'a FictionalAuthorSet,
    pub profile: &'a TemplateProfile,
}

/// Runs all six checks. Parse failures fail the checks that need a parse.
pub fn verify(inputs: &CameraReadyInputs<'_>) -> CameraReadyReport {
    let or_fail = |r: Result<CheckResult, LatexError>| r.unwrap_or_else(|e| CheckResult::from_failures(vec![e.to_string()]));
    let mut checks = BTreeMap::new();
    checks.insert(CheckName::LatexConformity, check_latex_conformity(inputs.source, inputs.profile));
    checks.insert(CheckName::SectionsComplete, or_fail(check_sections(inputs.source)));
    checks.insert(CheckName::CitationIntegrity, or_fail(check_citations(inputs.source).map(|c| c.to_check())));
    checks.insert(CheckName::FigureLineage, or_fail(check_figure_lineage(inputs.source, inputs.dataset)));
    checks.insert(CheckName::WatermarkPresent, check_watermark(inputs.source, inputs.paper_id, inputs.track));
    checks.insert(CheckName::AuthorConsistency, check_author_consistency(inputs.source, inputs.metadata, inputs.author_set));
    CameraReadyReport { checks }
}

/// Turns a revised manuscript into camera-ready form: markup accepted,
/// fictional authors set, watermark applied.
pub fn prepare(
    revised: &str,
    paper_id: &PaperId,
    track: Track,
    set: &FictionalAuthorSet,
    build_time: &Timestamp,
) -> Result<String, LatexError> {
    let accepted = latex::accept_red(revised)?;
    Ok(apply_watermark(&set_authors(&accepted, set), paper_id, track, build_time))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set() -> FictionalAuthorSet {
        FictionalAuthorSet {
            authors: vec![
                FictionalAuthor { name: "Liora Dunmere".into(), origin_tag: "invented".into() },
                FictionalAuthor { name: "Orin Mossby".into(), origin_tag: "invented".into() },
            ],
            institution: "Skynet Institute of Advanced Systems".into(),
            seed: 1,
            locked: true,
        }
    }

    #[test]
    fn set_authors_replaces_header() {
        let src = "\\documentclass{article}\n\\title{T}\n\\author{Generation Agent}\n\\begin{document}\n\\end{document}\n";
        let out = set_authors(src, &set());
        let doc = Document::parse(&out).unwrap();
        assert_eq!(doc.authors, vec!["Liora Dunmere", "Orin Mossby"]);
        assert_eq!(doc.affiliations, vec!["Skynet Institute of Advanced Systems"]);
        assert!(out.contains("\\usepackage{authblk}"));
        assert_eq!(set_authors(&out, &set()), out);
    }

    #[test]
    fn author_mismatch_names_the_field() {
        let src = set_authors("\\documentclass{article}\n\\begin{document}\n\\end{document}\n", &set());
        let t = crate::clock::parse_timestamp("2025-10-01T00:00:00Z").unwrap();
        let pid = PaperId::parse("PT1-SOCP-01").unwrap();
        let meta = MetadataSidecar::new(&pid, "T", &set(), Track::SocialProgress, &t);
        assert!(check_author_consistency(&src, &meta, &set()).passed);
        let mut ledger = set();
        ledger.institution = "Skynet Institute for Advanced Systems".into();
        let r = check_author_consistency(&src, &meta, &ledger);
        assert!(!r.passed);
        assert!(r.details.iter().all(|d| d.starts_with("institution")), "{:?}", r.details);
        let mut three = meta.clone();
        three.authors.push("Third Person".into());
        let r = check_author_consistency(&src, &three, &set());
        assert!(r.details.iter().any(|d| d.starts_with("authors: metadata")));
    }
}
