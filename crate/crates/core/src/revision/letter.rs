use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RevisionBundle;
use crate::latex::{canonical_section, Document};
use crate::review::{ReviewR1, ReviewR2};

pub const TABLE_BEGIN: &str = "[RESPONSE TABLE]";
pub const TABLE_END: &str = "[END RESPONSE TABLE]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Reviewer {
    R1,
    R2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    FullyAddressed,
    PartiallyAddressed,
    NotApplicable,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::FullyAddressed => "fully_addressed",
            Status::PartiallyAddressed => "partially_addressed",
            Status::NotApplicable => "not_applicable",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Status::FullyAddressed, Status::PartiallyAddressed, Status::NotApplicable]
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| format!("unknown status {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LetterEntry {
    pub reviewer: Reviewer,
    pub comment_excerpt: String,
    pub section_ref: String,
    pub status: Status,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResponseLetter {
    /// Free text outside the table block.
    pub prose: String,
    pub entries: Vec<LetterEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LetterError {
    #[error("no {TABLE_BEGIN} ... {TABLE_END} block")]
    MissingTable,
    #[error("table line {line}: {detail}")]
    BadLine { line: usize, detail: String },
}

impl ResponseLetter {
    /// Table line layout: `reviewer<TAB>status<TAB>section<TAB>excerpt`,
    /// optionally followed by `<TAB>rationale`.
    pub fn render(&self) -> String {
        let mut out = self.prose.trim_end().to_string();
        if !out.is_empty() {
            out.push_str("\n\n");
        }
        out.push_str(TABLE_BEGIN);
        out.push('\n');
        for e in &self.entries {
            let clean = |s: &str| s.replace(['\t', '\n'], " ");
            out.push_str(&format!(
                "{:?}\t{}\t{}\t{}",
                e.reviewer,
                e.status,
                clean(&e.section_ref),
                clean(&e.comment_excerpt)
            ));
            if !e.rationale.is_empty() {
                out.push('\t');
                out.push_str(&clean(&e.rationale));
            }
            out.push('\n');
        }
        out.push_str(TABLE_END);
        out.push('\n');
        out
    }
}

pub fn parse_response_letter(text: &str) -> Result<ResponseLetter, LetterError> {
    let begin = text.find(TABLE_BEGIN).ok_or(LetterError::MissingTable)?;
    let rest = &text[begin + TABLE_BEGIN.len()..];
    let end = rest.find(TABLE_END).ok_or(LetterError::MissingTable)?;
    let mut entries = Vec::new();
    for (i, line) in rest[..end].lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |detail: String| LetterError::BadLine { line: i, detail };
        let fields: Vec<&str> = line.split('\t').collect();
        if !(4..=5).contains(&fields.len()) {
            return Err(bad(format!("expected 4 or 5 tab-separated fields, found {}", fields.len())));
        }
        let reviewer = match fields[0].trim() {
            "R1" => Reviewer::R1,
            "R2" => Reviewer::R2,
            other => return Err(bad(format!("unknown reviewer {other:?}"))),
        };
        let status = fields[1].parse().map_err(bad)?;
        let excerpt = fields[3].trim();
        if excerpt.is_empty() {
            return Err(bad("empty excerpt".into()));
        }
        entries.push(LetterEntry {
            reviewer,
            status,
            section_ref: fields[2].trim().to_string(),
            comment_excerpt: excerpt.to_string(),
            rationale: fields.get(4).map_or(String::new(), |r| r.trim().to_string()),
        });
    }
    let prose = format!("{}{}", &text[..begin], &rest[end + TABLE_END.len()..]).trim().to_string();
    Ok(ResponseLetter { prose, entries })
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LetterReport {
    pub unmapped: Vec<(Reviewer, String)>,
    pub dangling_refs: Vec<String>,
    pub unsupported_full: Vec<String>,
}

impl LetterReport {
    pub fn passed(&self) -> bool {
        self.unmapped.is_empty() && self.dangling_refs.is_empty() && self.unsupported_full.is_empty()
    }
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn validate_response_letter(
    letter: &ResponseLetter,
    r1: &ReviewR1,
    r2: &ReviewR2,
    bundle: &RevisionBundle,
) -> LetterReport {
    let mut report = LetterReport::default();
    let major = r1
        .major_flaws
        .iter()
        .map(|m| (Reviewer::R1, m))
        .chain(r2.weaknesses.iter().map(|w| (Reviewer::R2, w)));
    for (who, item) in major {
        let item_n = squash(item);
        let quoted = letter
            .entries
            .iter()
            .any(|e| e.reviewer == who && !e.comment_excerpt.trim().is_empty() && item_n.contains(&squash(&e.comment_excerpt)));
        if !quoted {
            report.unmapped.push((who, item.clone()));
        }
    }

    let doc = match Document::parse(&bundle.revised_source) {
        Ok(d) => d,
        Err(e) => {
            report.dangling_refs.push(format!("revised manuscript does not parse: {e}"));
            return report;
        }
    };
    for e in &letter.entries {
        let name = canonical_section(&e.section_ref);
        let range = if name == "abstract" && doc.section("abstract").is_none() {
            doc.abstract_text.clone()
        } else {
            doc.section(&name).map(|s| s.range.clone())
        };
        let Some(range) = range else {
            report.dangling_refs.push(e.section_ref.clone());
            continue;
        };
        if e.status == Status::FullyAddressed
            && !bundle.markup_spans.iter().any(|s| range.contains(&s.char_range.start))
        {
            report.unsupported_full.push(format!("{}: {}", e.section_ref, e.comment_excerpt));
        }
    }
    report
}
