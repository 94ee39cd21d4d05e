//! Slide planning, narration timing, avatar render jobs and the Q&A scope
//! filter.

mod avatar;
mod qa;

use serde::{Deserialize, Serialize};

pub use avatar::{build_avatar_job, validate_avatar_job, AvatarChoice, AvatarError, AvatarJob, Consent, EmbedMetadata, JobSegment, AVATAR_LABEL};
pub use qa::{qa_scope_filter, Passage, QaOutcome};

use crate::latex::{self, Document};

pub const TITLE_SLIDE_MS: u64 = 30_000;
pub const CLOSING_SLIDE_MS: u64 = 30_000;
pub const MIN_SLIDES: usize = 8;
pub const MAX_SLIDES: usize = 10;
pub const DEFAULT_WPM: u32 = 150;
/// Per-slide overrun tolerated before a warning.
pub const BUDGET_SLACK: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PresentationError {
    #[error("non-positive budget")]
    NonPositiveBudget,
    #[error("budget of {0} s leaves no time after the fixed title and closing slides")]
    BudgetTooSmall(f64),
    #[error("manuscript missing core section {0}")]
    MissingSection(String),
    #[error("slide titles: {0}")]
    Titles(String),
}

fn ms_to_s(ms: u64) -> f64 {
    ms as f64 / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slide {
    pub index: usize,
    pub title: String,
    pub content_refs: Vec<String>,
    pub time_budget_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidePlan {
    pub slides: Vec<Slide>,
    pub total_budget_s: f64,
}

impl SlidePlan {
    pub fn budget_ms(&self, index: usize) -> Option<u64> {
        self.slides.iter().find(|s| s.index == index).map(|s| (s.time_budget_s * 1000.0).round() as u64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// One tab-separated line per slide: index, title, refs, budget in
    /// seconds, and the word count that fills the budget at `wpm`.
    pub fn outline(&self, wpm: u32) -> String {
        self.slides
            .iter()
            .map(|s| {
                let words = (s.time_budget_s * f64::from(wpm) / 60.0).floor() as u64;
                format!("{}\t{}\t{}\t{:.3}\t{words}\n", s.index, s.title, s.content_refs.join(","), s.time_budget_s)
            })
            .collect()
    }

    /// Applies agent-drafted `[SLIDE n] title` lines. Every slide must get
    /// exactly one title.
    pub fn apply_titles(&mut self, text: &str) -> Result<(), PresentationError> {
        let mut titles = std::collections::BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (n, title) = parse_marker(line).ok_or_else(|| PresentationError::Titles(format!("bad line {line:?}")))?;
            let title = title.trim();
            if title.is_empty() || titles.insert(n, title.to_string()).is_some() {
                return Err(PresentationError::Titles(format!("slide {n} titled twice or empty")));
            }
        }
        let expected: Vec<usize> = self.slides.iter().map(|s| s.index).collect();
        if titles.keys().copied().collect::<Vec<_>>() != expected {
            return Err(PresentationError::Titles(format!("expected slides {expected:?}")));
        }
        for s in &mut self.slides {
            s.title = titles.remove(&s.index).expect("checked above");
        }
        Ok(())
    }
}

/// `[SLIDE n] rest` → `(n, rest)`.
fn parse_marker(line: &str) -> Option<(usize, &str)> {
    let rest = line.strip_prefix("[SLIDE ")?;
    let (n, tail) = rest.split_once(']')?;
    Some((n.trim().parse().ok()?, tail))
}

/// Splits `total` into integer parts proportional to `weights` with the
/// largest-remainder method; the parts always sum to `total`.
pub fn largest_remainder(total: u64, weights: &[u64]) -> Vec<u64> {
    let w_sum: u128 = weights.iter().map(|w| u128::from(*w)).sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if w_sum == 0 {
        return largest_remainder(total, &vec![1; weights.len()]);
    }
    let mut parts: Vec<(u64, u128, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let exact = u128::from(total) * u128::from(*w);
            ((exact / w_sum) as u64, exact % w_sum, i)
        })
        .collect();
    let assigned: u64 = parts.iter().map(|p| p.0).sum();
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by(|a, b| parts[*b].1.cmp(&parts[*a].1).then(a.cmp(b)));
    for i in order.into_iter().take((total - assigned) as usize) {
        parts[i].0 += 1;
    }
    parts.into_iter().map(|p| p.0).collect()
}

struct ContentSection {
    title: String,
    canonical: String,
    weight: u64,
}

/// Slides per section: one each, the rest by highest averages on weight.
fn seats(weights: &[u64], n: usize) -> Vec<usize> {
    let mut s = vec![1usize; weights.len()];
    for _ in weights.len()..n {
        let best = (0..weights.len())
            .max_by(|a, b| {
                let qa = weights[*a] as u128 * (s[*b] as u128 + 1);
                let qb = weights[*b] as u128 * (s[*a] as u128 + 1);
                qa.cmp(&qb).then(b.cmp(a))
            })
            .expect("non-empty");
        s[best] += 1;
    }
    s
}

/// Builds a deck of 8–10 slides: a title slide and a closing slide at 30 s
/// each, and content slides sized to section length.
pub fn plan_slides(doc: &Document, total_budget_s: f64) -> Result<SlidePlan, PresentationError> {
    if !(total_budget_s.is_finite() && total_budget_s > 0.0) {
        return Err(PresentationError::NonPositiveBudget);
    }
    let total_ms = (total_budget_s * 1000.0).round() as u64;
    let content_ms = total_ms
        .checked_sub(TITLE_SLIDE_MS + CLOSING_SLIDE_MS)
        .filter(|ms| *ms > 0)
        .ok_or(PresentationError::BudgetTooSmall(total_budget_s))?;
    for core in ["introduction", "methodology", "results"] {
        if doc.section(core).is_none() {
            return Err(PresentationError::MissingSection(core.into()));
        }
    }
    let closing = doc
        .section("conclusion")
        .or_else(|| doc.section("discussion"))
        .ok_or_else(|| PresentationError::MissingSection("conclusion".into()))?;
    let content: Vec<ContentSection> = doc
        .sections
        .iter()
        .filter(|s| s.level == 1 && s.canonical != closing.canonical && !matches!(s.canonical.as_str(), "references" | "abstract"))
        .map(|s| ContentSection {
            title: s.title.clone(),
            canonical: s.canonical.clone(),
            weight: latex::word_count(doc.section_text(s)).max(1) as u64,
        })
        .collect();

    let wanted = ((content_ms as f64 / 1000.0) / 75.0).round() as usize;
    let n_content = wanted.clamp(MIN_SLIDES - 2, MAX_SLIDES - 2);
    // Group sections into n_content buckets when there are more sections than slots.
    // More sections than slots: merge the lightest adjacent pair until they fit.
    let mut groups: Vec<Vec<&ContentSection>> = content.iter().map(|c| vec![c]).collect();
    while groups.len() > n_content {
        let weight = |g: &Vec<&ContentSection>| g.iter().map(|c| c.weight).sum::<u64>();
        let i = (0..groups.len() - 1)
            .min_by_key(|i| weight(&groups[*i]) + weight(&groups[*i + 1]))
            .expect("at least two groups");
        let next = groups.remove(i + 1);
        groups[i].extend(next);
    }
    let group_weights: Vec<u64> = groups.iter().map(|g| g.iter().map(|c| c.weight).sum()).collect();
    let per_group = seats(&group_weights, n_content);

    let mut slide_weights = Vec::new();
    let mut drafts: Vec<(String, Vec<String>)> = Vec::new();
    for ((group, weight), count) in groups.iter().zip(&group_weights).zip(&per_group) {
        let refs: Vec<String> = group.iter().map(|c| c.canonical.clone()).collect();
        let base_title = group.iter().map(|c| c.title.as_str()).collect::<Vec<_>>().join(" / ");
        for part in largest_remainder(*weight, &vec![1; *count]).into_iter().enumerate() {
            let title = if *count > 1 { format!("{base_title} ({}/{count})", part.0 + 1) } else { base_title.clone() };
            drafts.push((title, refs.clone()));
            slide_weights.push(part.1.max(1));
        }
    }
    let budgets = largest_remainder(content_ms, &slide_weights);

    let mut slides = vec![Slide {
        index: 1,
        title: doc.title.clone().unwrap_or_else(|| "Title".into()),
        content_refs: if doc.has_abstract() { vec!["abstract".into()] } else { vec![] },
        time_budget_s: ms_to_s(TITLE_SLIDE_MS),
    }];
    for ((title, refs), ms) in drafts.into_iter().zip(budgets) {
        slides.push(Slide { index: slides.len() + 1, title, content_refs: refs, time_budget_s: ms_to_s(ms) });
    }
    slides.push(Slide {
        index: slides.len() + 1,
        title: closing.title.clone(),
        content_refs: vec![closing.canonical.clone()],
        time_budget_s: ms_to_s(CLOSING_SLIDE_MS),
    });
    Ok(SlidePlan { slides, total_budget_s: ms_to_s(total_ms) })
}

/// Dangling section anchors in a plan.
pub fn check_slide_lineage(plan: &SlidePlan, doc: &Document) -> Vec<String> {
    plan.slides
        .iter()
        .flat_map(|s| s.content_refs.iter().map(move |r| (s.index, r)))
        .filter(|(_, r)| !(doc.section(r).is_some() || (r.as_str() == "abstract" && doc.has_abstract())))
        .map(|(i, r)| format!("slide {i}: {r}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrationBlock {
    pub slide_index: usize,
    pub start_s: f64,
    pub duration_s: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrationScript {
    pub blocks: Vec<NarrationBlock>,
    pub warnings: Vec<String>,
}

impl NarrationScript {
    pub fn total_s(&self) -> f64 {
        self.blocks.last().map_or(0.0, |b| b.start_s + b.duration_s)
    }

    /// Each block starts where the previous one ended.
    pub fn is_contiguous(&self) -> bool {
        let mut t = 0.0;
        for b in &self.blocks {
            if (b.start_s - t).abs() > 1e-9 || b.duration_s < 0.0 {
                return false;
            }
            t = b.start_s + b.duration_s;
        }
        true
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NarrationError {
    #[error("text before the first slide marker")]
    UnmarkedText,
    #[error("marker for nonexistent slide {0}")]
    UnknownSlide(usize),
    #[error("marker for slide {found} out of order, expected slide {expected}")]
    OutOfOrder { expected: usize, found: usize },
    #[error("no narration for slide {0}")]
    MissingSlide(usize),
    #[error("words per minute must be positive")]
    BadRate,
}

/// Milliseconds to speak `words` at `wpm`.
pub fn speaking_ms(words: usize, wpm: u32) -> u64 {
    ((words as u128 * 60_000 + u128::from(wpm) / 2) / u128::from(wpm)) as u64
}

fn spoken_words(text: &str) -> usize {
    text.split_whitespace().filter(|w| w.chars().any(char::is_alphanumeric)).count()
}

/// Splits a `[SLIDE n]`-marked script into time-coded blocks.
pub fn segment_narration(script_text: &str, plan: &SlidePlan, wpm: u32) -> Result<NarrationScript, NarrationError> {
    if wpm == 0 {
        return Err(NarrationError::BadRate);
    }
    let mut chunks: Vec<(usize, String)> = Vec::new();
    for line in script_text.lines() {
        let t = line.trim_start();
        if let Some((n, rest)) = t.starts_with("[SLIDE ").then(|| parse_marker(t)).flatten() {
            chunks.push((n, rest.trim().to_string()));
        } else if let Some((_, body)) = chunks.last_mut() {
            if !body.is_empty() && !line.trim().is_empty() {
                body.push(' ');
            }
            body.push_str(line.trim());
        } else if !line.trim().is_empty() {
            return Err(NarrationError::UnmarkedText);
        }
    }
    let expected: Vec<usize> = plan.slides.iter().map(|s| s.index).collect();
    let mut blocks = Vec::new();
    let mut warnings = Vec::new();
    let mut start_ms = 0u64;
    for (k, (n, text)) in chunks.into_iter().enumerate() {
        if !expected.contains(&n) {
            return Err(NarrationError::UnknownSlide(n));
        }
        if expected.get(k) != Some(&n) {
            return Err(NarrationError::OutOfOrder { expected: expected.get(k).copied().unwrap_or(0), found: n });
        }
        let words = spoken_words(&text);
        let ms = speaking_ms(words, wpm);
        if words == 0 {
            warnings.push(format!("slide {n}: empty narration"));
        }
        let budget = plan.budget_ms(n).expect("slide exists");
        if ms as f64 > budget as f64 * (1.0 + BUDGET_SLACK) {
            warnings.push(format!("slide {n}: {:.1} s exceeds budget {:.1} s", ms_to_s(ms), ms_to_s(budget)));
        }
        blocks.push(NarrationBlock { slide_index: n, start_s: ms_to_s(start_ms), duration_s: ms_to_s(ms), text });
        start_ms += ms;
    }
    if let Some(missing) = expected.get(blocks.len()) {
        return Err(NarrationError::MissingSlide(*missing));
    }
    Ok(NarrationScript { blocks, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(results_words: usize) -> Document {
        let filler = |n: usize| vec!["word"; n].join(" ");
        let src = format!(
            "\\documentclass{{article}}\n\\title{{T}}\n\\begin{{document}}\n\\begin{{abstract}}\nA.\n\\end{{abstract}}\n\\section{{Introduction}}\n{}\n\\section{{Methodology}}\n{}\n\\section{{Results}}\n{}\n\\section{{Discussion}}\n{}\n\\section{{Conclusion}}\nDone.\n\\end{{document}}\n",
            filler(200),
            filler(300),
            filler(results_words),
            filler(200)
        );
        Document::parse(&src).unwrap()
    }

    #[test]
    fn standard_budget_gives_nine_slides() {
        let plan = plan_slides(&doc(300), 600.0).unwrap();
        assert_eq!(plan.slides.len(), 9);
        let total_ms: u64 = plan.slides.iter().map(|s| plan.budget_ms(s.index).unwrap()).sum();
        assert_eq!(total_ms, 600_000);
        for core in ["introduction", "methodology", "results", "conclusion"] {
            assert!(plan.slides.iter().any(|s| s.content_refs.iter().any(|r| r == core)), "{core}");
        }
        assert!(check_slide_lineage(&plan, &doc(300)).is_empty());
    }

    #[test]
    fn slide_count_stays_in_range() {
        for budget in [61.0, 120.0, 300.0, 600.0, 900.0, 3600.0] {
            let n = plan_slides(&doc(300), budget).unwrap().slides.len();
            assert!((MIN_SLIDES..=MAX_SLIDES).contains(&n), "{budget}: {n}");
        }
    }

    #[test]
    fn large_results_get_largest_share() {
        let plan = plan_slides(&doc(5000), 600.0).unwrap();
        let share = |r: &str| -> f64 {
            plan.slides.iter().filter(|s| s.content_refs.iter().any(|c| c == r)).map(|s| s.time_budget_s).sum()
        };
        assert!(share("results") > share("methodology"));
        assert!(share("results") > share("introduction"));
    }

    #[test]
    fn bad_budgets() {
        assert_eq!(plan_slides(&doc(300), 0.0).unwrap_err().to_string(), "non-positive budget");
        assert_eq!(plan_slides(&doc(300), -5.0).unwrap_err(), PresentationError::NonPositiveBudget);
        assert!(matches!(plan_slides(&doc(300), 60.0), Err(PresentationError::BudgetTooSmall(_))));
    }

    #[test]
    fn largest_remainder_is_exact() {
        assert_eq!(largest_remainder(10, &[1, 1, 1]), vec![4, 3, 3]);
        assert_eq!(largest_remainder(7, &[0, 0]), vec![4, 3]);
        assert_eq!(largest_remainder(100, &[1, 2, 7]).iter().sum::<u64>(), 100);
    }

    #[test]
    fn narration_arithmetic() {
        assert_eq!(speaking_ms(300, 150), 120_000);
        let plan = plan_slides(&doc(300), 600.0).unwrap();
        let mut script = String::new();
        for s in &plan.slides {
            script.push_str(&format!("[SLIDE {}]\n{}\n", s.index, ["talk"; 10].join(" ")));
        }
        let n = segment_narration(&script, &plan, 150).unwrap();
        assert!(n.is_contiguous());
        assert_eq!(n.blocks[0].duration_s, 4.0);
    }

    #[test]
    fn narration_errors() {
        let plan = plan_slides(&doc(300), 600.0).unwrap();
        assert_eq!(segment_narration("hello\n[SLIDE 1] x", &plan, 150).unwrap_err(), NarrationError::UnmarkedText);
        assert_eq!(segment_narration("[SLIDE 2] x", &plan, 150).unwrap_err(), NarrationError::OutOfOrder { expected: 1, found: 2 });
        assert_eq!(segment_narration("[SLIDE 42] x", &plan, 150).unwrap_err(), NarrationError::UnknownSlide(42));
        assert_eq!(segment_narration("[SLIDE 1] x", &plan, 150).unwrap_err(), NarrationError::MissingSlide(2));
    }

    #[test]
    fn titles_apply_only_when_complete() {
        let mut plan = plan_slides(&doc(300), 600.0).unwrap();
        let text: String = plan.slides.iter().map(|s| format!("[SLIDE {}] New {}\n", s.index, s.index)).collect();
        plan.apply_titles(&text).unwrap();
        assert_eq!(plan.slides[0].title, "New 1");
        assert!(plan.apply_titles("[SLIDE 1] only one").is_err());
    }
}
