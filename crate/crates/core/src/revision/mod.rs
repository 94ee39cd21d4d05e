//! Checks on the revision loop: red-marked manuscript and response letter.

mod letter;

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use similar::{ChangeTag, TextDiff};

pub use letter::{
    parse_response_letter, validate_response_letter, LetterEntry, LetterError, LetterReport, ResponseLetter, Reviewer,
    Status, TABLE_BEGIN, TABLE_END,
};

use crate::latex::{self, Document, FloatKind};

pub const EXPANSION_BAND: (f64, f64) = (0.15, 0.45);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkupSpan {
    pub section: String,
    pub char_range: Range<usize>,
    pub inserted_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionBundle {
    pub original_source: String,
    pub revised_source: String,
    pub markup_spans: Vec<MarkupSpan>,
    /// Top-level sections with a defined growth ratio.
    pub expansion_by_section: BTreeMap<String, f64>,
    /// Sections empty in the original, where the ratio is undefined.
    pub undefined_sections: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RevisionProblem {
    Unparseable { which: String, error: String },
    StructureMismatch { original: Vec<String>, revised: Vec<String> },
    LostCitation(String),
    LostFigure(String),
    LostTable(String),
    UnmarkedInsertion { section: String, text: String },
}

impl std::fmt::Display for RevisionProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RevisionProblem::Unparseable { which, error } => write!(f, "{which} does not parse: {error}"),
            RevisionProblem::StructureMismatch { original, revised } => {
                write!(f, "section structure changed: {original:?} became {revised:?}")
            }
            RevisionProblem::LostCitation(k) => write!(f, "citation {k} lost"),
            RevisionProblem::LostFigure(l) => write!(f, "figure {l} lost"),
            RevisionProblem::LostTable(l) => write!(f, "table {l} lost"),
            RevisionProblem::UnmarkedInsertion { section, text } => {
                write!(f, "unmarked insertion in {section}: {text:?}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}", problems.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("; "))]
pub struct RevisionError {
    pub problems: Vec<RevisionProblem>,
}

fn skeleton_names(doc: &Document) -> Vec<String> {
    doc.skeleton().into_iter().map(|(l, n)| format!("{}{n}", "#".repeat(l as usize))).collect()
}

fn section_name(doc: &Document, offset: usize) -> String {
    if doc.abstract_text.as_ref().is_some_and(|r| r.contains(&offset)) {
        return "abstract".into();
    }
    doc.top_section_at(offset).map_or_else(|| "front matter".into(), |s| s.canonical.clone())
}

/// Growth of each top-level section, with markup accepted in `revised`.
fn expansion(original: &Document, revised_accepted: &Document) -> (BTreeMap<String, f64>, Vec<String>) {
    let mut ratios = BTreeMap::new();
    let mut undefined = Vec::new();
    for s in original.sections.iter().filter(|s| s.level == 1) {
        let Some(r) = revised_accepted.sections.iter().find(|r| r.level == 1 && r.canonical == s.canonical) else {
            continue;
        };
        let before = original.source[s.range.clone()].trim().chars().count();
        let after = revised_accepted.source[r.range.clone()].trim().chars().count();
        let body_empty = original.section_text(s).trim().is_empty();
        if before == 0 || body_empty {
            undefined.push(s.canonical.clone());
        } else {
            ratios.insert(s.canonical.clone(), (after as f64 - before as f64) / before as f64);
        }
    }
    (ratios, undefined)
}

/// Validates the structure of a revision and extracts its red spans.
pub fn validate_markup(original: &str, revised: &str) -> Result<RevisionBundle, RevisionError> {
    let parse = |which: &str, src: &str| {
        Document::parse(src).map_err(|e| RevisionError {
            problems: vec![RevisionProblem::Unparseable { which: which.into(), error: e.to_string() }],
        })
    };
    let orig = parse("original", original)?;
    let rev = parse("revised", revised)?;
    let stripped_src = latex::strip_red(revised).expect("parsed above");
    let accepted_src = latex::accept_red(revised).expect("parsed above");
    let stripped = parse("revised without markup", &stripped_src)?;
    let accepted = parse("revised with markup accepted", &accepted_src)?;

    let mut problems = Vec::new();
    // Red text may add subsections; everything outside it must keep the
    // original outline.
    let (so, sr) = (skeleton_names(&orig), skeleton_names(&stripped));
    if so != sr {
        problems.push(RevisionProblem::StructureMismatch { original: so, revised: sr });
    }
    // What the original had must survive even with red text removed, so a
    // citation cannot be "kept" only inside an insertion.
    for k in orig.cite_keys().difference(&stripped.cite_keys()) {
        problems.push(RevisionProblem::LostCitation(k.clone()));
    }
    for l in orig.labels(FloatKind::Figure).difference(&stripped.labels(FloatKind::Figure)) {
        problems.push(RevisionProblem::LostFigure(l.clone()));
    }
    for l in orig.labels(FloatKind::Table).difference(&stripped.labels(FloatKind::Table)) {
        problems.push(RevisionProblem::LostTable(l.clone()));
    }
    let diff = TextDiff::from_words(original, &stripped_src);
    let mut offset = 0usize;
    for change in diff.iter_all_changes() {
        let text = change.value();
        match change.tag() {
            ChangeTag::Equal => offset += text.len(),
            ChangeTag::Delete => {}
            ChangeTag::Insert => {
                if text.chars().any(char::is_alphanumeric) {
                    problems.push(RevisionProblem::UnmarkedInsertion {
                        section: section_name(&stripped, offset.min(stripped_src.len().saturating_sub(1))),
                        text: text.to_string(),
                    });
                }
                offset += text.len();
            }
        }
    }
    if !problems.is_empty() {
        return Err(RevisionError { problems });
    }
    let markup_spans = rev
        .red_spans
        .iter()
        .map(|s| MarkupSpan { section: section_name(&rev, s.outer.start), char_range: s.outer.clone(), inserted_text: s.text.clone() })
        .collect();
    let (expansion_by_section, undefined_sections) = expansion(&orig, &accepted);
    Ok(RevisionBundle {
        original_source: original.to_string(),
        revised_source: revised.to_string(),
        markup_spans,
        expansion_by_section,
        undefined_sections,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub ratios: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub undefined: Vec<String>,
}

/// Ratios for `targets`, warning outside the expected growth band.
pub fn measure_expansion(bundle: &RevisionBundle, targets: &[&str]) -> ExpansionReport {
    let (lo, hi) = EXPANSION_BAND;
    let mut report = ExpansionReport { ratios: BTreeMap::new(), warnings: Vec::new(), undefined: Vec::new() };
    for t in targets {
        let t = latex::canonical_section(t);
        if let Some(r) = bundle.expansion_by_section.get(&t) {
            if !(lo..=hi).contains(r) {
                report.warnings.push(format!("{t}: growth {r:.2} outside [{lo}, {hi}]"));
            }
            report.ratios.insert(t, *r);
        } else if bundle.undefined_sections.contains(&t) {
            report.undefined.push(t);
        } else {
            report.warnings.push(format!("{t}: not a section of the manuscript"));
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BulletViolation {
    pub section: String,
    pub offset: usize,
    pub environment: String,
}

/// List environments inside red insertions. Lists in untouched text are
/// allowed.
pub fn check_no_bullets(bundle: &RevisionBundle) -> Vec<BulletViolation> {
    let re = regex::Regex::new(r"\\begin\{(itemize|enumerate|description)\}").expect("static regex");
    let masked = latex::mask_comments(&bundle.revised_source);
    bundle
        .markup_spans
        .iter()
        .flat_map(|s| {
            re.captures_iter(&masked[s.char_range.clone()])
                .map(|c| BulletViolation {
                    section: s.section.clone(),
                    offset: s.char_range.start + c.get(0).expect("match").start(),
                    environment: c[1].to_string(),
                })
                .collect::<Vec<_>>()
        })
        .collect()
}
