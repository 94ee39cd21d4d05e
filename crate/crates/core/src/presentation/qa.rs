use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::intake::DatasetRecord;
use crate::latex;

const STOPWORDS: &[&str] = &[
    "the", "and", "for", "are", "was", "were", "with", "that", "this", "from", "what", "which", "how", "does", "did",
    "has", "have", "into", "about", "their", "there", "than", "then", "they", "you", "your", "our", "its", "can", "why",
    "who", "when", "where", "not", "any", "all", "but", "is", "of", "in", "to", "a",
];

fn terms(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|w| w.chars().count() >= 3 && !STOPWORDS.contains(&w.as_str()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub index: usize,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QaOutcome {
    Grounded(Vec<Passage>),
    Refusal(String),
}

impl QaOutcome {
    pub fn is_refusal(&self) -> bool {
        matches!(self, QaOutcome::Refusal(_))
    }
}

pub const MAX_PASSAGES: usize = 3;

fn passages(paper_text: &str, dataset: &DatasetRecord) -> Vec<String> {
    let prose = latex::mask_comments(paper_text);
    let prose = regex::Regex::new(r"\\[a-zA-Z]+\*?").expect("static regex").replace_all(&prose, " ");
    let mut out: Vec<String> = prose
        .split("\n\n")
        .map(|p| p.split_whitespace().collect::<Vec<_>>().join(" ").replace(['{', '}'], ""))
        .filter(|p| !p.trim().is_empty())
        .collect();
    out.push(format!("Dataset {} from {} under license {}", dataset.dataset_id, dataset.url, dataset.license_id));
    out
}

/// Answers only from the paper: passages whose share of question terms
/// exceeds `threshold`, best first. Otherwise refuses.
pub fn qa_scope_filter(question: &str, paper_text: &str, dataset: &DatasetRecord, threshold: f64) -> QaOutcome {
    let q = terms(question);
    if q.is_empty() {
        return QaOutcome::Refusal("question has no searchable terms".into());
    }
    let mut hits: Vec<Passage> = passages(paper_text, dataset)
        .into_iter()
        .enumerate()
        .map(|(index, text)| {
            let overlap = terms(&text).intersection(&q).count();
            Passage { index, score: overlap as f64 / q.len() as f64, text }
        })
        .filter(|p| p.score > threshold)
        .collect();
    if hits.is_empty() {
        return QaOutcome::Refusal("outside the scope of this paper".into());
    }
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    hits.truncate(MAX_PASSAGES);
    QaOutcome::Grounded(hits)
}
