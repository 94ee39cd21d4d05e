//! Parsing of the two reviewer formats and the triage rule.

mod sections;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::score::Tenths;
use sections::{items, norm_token, parse_score, score_lines, split_sections, verdict_line};

macro_rules! labelled_enum {
    ($name:ident { $($variant:ident => $token:literal, $label:literal;)* }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),* }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),*];

            pub fn token(self) -> &'static str {
                match self { $($name::$variant => $token),* }
            }

            pub fn label(self) -> &'static str {
                match self { $($name::$variant => $label),* }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                let n = norm_token(s);
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| norm_token(v.token()) == n || norm_token(v.label()) == n)
                    .ok_or_else(|| format!("unrecognized {} {s:?}", stringify!($name)))
            }
        }
    };
}

labelled_enum!(R1Recommendation {
    StrongAccept => "strong_accept", "Strong Accept";
    Accept => "accept", "Accept";
    WeakAccept => "weak_accept", "Weak Accept";
    WeakReject => "weak_reject", "Weak Reject";
    Reject => "reject", "Reject";
});

labelled_enum!(R2Verdict {
    Accept => "accept", "Accept";
    WeakAccept => "weak_accept", "Weak Accept";
    Reject => "reject", "Reject";
});

labelled_enum!(TriageDecision {
    Accept => "accept", "ACCEPT";
    Revise => "revise", "REVISE";
    Reject => "reject", "REJECT";
});

labelled_enum!(R1Category {
    Originality => "originality", "Originality";
    ScientificRigor => "scientific_rigor", "Scientific Rigor";
    Clarity => "clarity", "Clarity";
    Reproducibility => "reproducibility", "Reproducibility";
    Significance => "significance", "Significance";
    Ethics => "ethics", "Ethics";
});

labelled_enum!(R2Dimension {
    ProblemDefinition => "problem_definition", "Problem Definition";
    MethodologicalSoundness => "methodological_soundness", "Methodological Soundness";
    ResultsAndEvidence => "results_and_evidence", "Results and Evidence";
    ContributionToField => "contribution_to_field", "Contribution to Field";
    WritingAndPresentation => "writing_and_presentation", "Writing and Presentation";
    EthicalTransparency => "ethical_transparency", "Ethical Transparency";
});

/// Every problem found while parsing a review, not just the first.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}", problems.join("; "))]
pub struct ReviewParseError {
    pub problems: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewR1 {
    pub category_scores: BTreeMap<R1Category, Tenths>,
    pub overall: Tenths,
    pub recommendation: R1Recommendation,
    pub summary: String,
    pub major_flaws: Vec<String>,
    pub minor_flaws: Vec<String>,
    pub suggestions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewR2 {
    pub dimension_scores: BTreeMap<R2Dimension, Tenths>,
    pub verdict: R2Verdict,
    pub overall_impression: String,
    pub strengths: Vec<String>,
    pub weaknesses: Vec<String>,
    pub recommendations: Vec<String>,
}

struct Sections {
    found: Vec<(String, String)>,
    problems: Vec<String>,
}

impl Sections {
    fn new(text: &str) -> Self {
        Sections { found: split_sections(text), problems: Vec::new() }
    }

    fn take(&mut self, heading: &str) -> Option<String> {
        match self.found.iter().find(|(h, _)| h == heading) {
            Some((_, body)) => Some(body.clone()),
            None => {
                self.problems.push(format!("missing section {heading:?}"));
                None
            }
        }
    }

    fn scores<K: Copy + Ord + FromStr>(
        &mut self,
        body: Option<&str>,
        keys: &[K],
        lo: u32,
        hi: u32,
        key_name: impl Fn(K) -> &'static str,
    ) -> (BTreeMap<K, Tenths>, BTreeMap<String, String>) {
        let mut out = BTreeMap::new();
        let mut rest = BTreeMap::new();
        for (k, v) in body.map(score_lines).unwrap_or_default() {
            match k.parse::<K>() {
                Ok(key) => match parse_score(&v, lo, hi) {
                    Ok(s) => {
                        out.insert(key, s);
                    }
                    Err(e) => self.problems.push(format!("{}: {e}", key_name(key))),
                },
                Err(_) => {
                    rest.insert(k, v);
                }
            }
        }
        if body.is_some() {
            for k in keys {
                if !out.contains_key(k) && !self.problems.iter().any(|p| p.starts_with(key_name(*k))) {
                    self.problems.push(format!("missing score {}", key_name(*k)));
                }
            }
        }
        (out, rest)
    }

    fn verdict<V: FromStr>(&mut self, body: Option<&str>) -> Option<V> {
        let body = body?;
        let line = verdict_line(body);
        match line.parse::<V>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.problems.push(format!("unparseable recommendation {line:?}"));
                None
            }
        }
    }

    fn finish<T>(self, value: Option<T>) -> Result<T, ReviewParseError> {
        match value {
            Some(v) if self.problems.is_empty() => Ok(v),
            _ => Err(ReviewParseError { problems: self.problems }),
        }
    }
}

fn render_list(out: &mut String, items: &[String]) {
    for (i, item) in items.iter().enumerate() {
        out.push_str(&format!("{}. {item}\n", i + 1));
    }
}

pub fn parse_review_r1(text: &str) -> Result<ReviewR1, ReviewParseError> {
    let mut s = Sections::new(text);
    let summary = s.take("summary");
    let scores_body = s.take("scores");
    let major = s.take("major flaws");
    let minor = s.take("minor flaws");
    let suggestions = s.take("suggestions");
    let rec_body = s.take("recommendation");
    let (category_scores, rest) =
        s.scores(scores_body.as_deref(), R1Category::ALL, 1, 10, |k: R1Category| k.token());
    let overall = match rest.get("overall") {
        Some(v) => parse_score(v, 1, 10).map_err(|e| s.problems.push(format!("overall: {e}"))).ok(),
        None => {
            if scores_body.is_some() {
                s.problems.push("missing score overall".into());
            }
            None
        }
    };
    let recommendation = s.verdict::<R1Recommendation>(rec_body.as_deref());
    let value = (|| {
        Some(ReviewR1 {
            category_scores,
            overall: overall?,
            recommendation: recommendation?,
            summary: summary?,
            major_flaws: items(&major?),
            minor_flaws: items(&minor?),
            suggestions: items(&suggestions?),
        })
    })();
    s.finish(value)
}

pub fn parse_review_r2(text: &str) -> Result<ReviewR2, ReviewParseError> {
    let mut s = Sections::new(text);
    let impression = s.take("overall impression");
    let assessment = s.take("technical and scientific assessment");
    let strengths = s.take("strengths");
    let weaknesses = s.take("weaknesses");
    let recommendations = s.take("recommendations");
    let verdict_body = s.take("final verdict");
    let (dimension_scores, _) =
        s.scores(assessment.as_deref(), R2Dimension::ALL, 0, 5, |k: R2Dimension| k.token());
    let verdict = s.verdict::<R2Verdict>(verdict_body.as_deref());
    let value = (|| {
        Some(ReviewR2 {
            dimension_scores,
            verdict: verdict?,
            overall_impression: impression?,
            strengths: items(&strengths?),
            weaknesses: items(&weaknesses?),
            recommendations: items(&recommendations?),
        })
    })();
    s.finish(value)
}

impl ReviewR1 {
    /// Canonical text form; `parse_review_r1` reads it back unchanged.
    pub fn render(&self) -> String {
        let mut out = format!("## Summary\n{}\n\n## Scores\n", self.summary);
        for (k, v) in &self.category_scores {
            out.push_str(&format!("- {}: {v}\n", k.label()));
        }
        out.push_str(&format!("- Overall: {}\n\n## Major Flaws\n", self.overall));
        render_list(&mut out, &self.major_flaws);
        out.push_str("\n## Minor Flaws\n");
        render_list(&mut out, &self.minor_flaws);
        out.push_str("\n## Suggestions\n");
        render_list(&mut out, &self.suggestions);
        out.push_str(&format!("\n## Recommendation\n{}\n", self.recommendation.label()));
        out
    }
}

impl ReviewR2 {
    pub fn render(&self) -> String {
        let mut out = format!(
            "## Overall Impression\n{}\n\n## Technical and Scientific Assessment\n",
            self.overall_impression
        );
        for (k, v) in &self.dimension_scores {
            out.push_str(&format!("- {}: {v}\n", k.label()));
        }
        out.push_str("\n## Strengths\n");
        render_list(&mut out, &self.strengths);
        out.push_str("\n## Weaknesses\n");
        render_list(&mut out, &self.weaknesses);
        out.push_str("\n## Recommendations\n");
        render_list(&mut out, &self.recommendations);
        out.push_str(&format!("\n## Final Verdict\n{}\n", self.verdict.label()));
        out
    }
}

/// Maps the 0–5 dimension mean onto the 10-point scale (mean × 2).
pub fn normalize_r2(review: &ReviewR2) -> Tenths {
    let sum: u32 = review.dimension_scores.values().map(|t| t.tenths()).sum();
    let n = review.dimension_scores.len().max(1) as u32;
    // mean * 2 = sum * 2 / n
    Tenths::from_tenths(2 * sum).div_rounded(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriagePolicy {
    pub accept_threshold: Tenths,
}

impl Default for TriagePolicy {
    fn default() -> Self {
        TriagePolicy { accept_threshold: Tenths::whole(7) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageOutcome {
    pub r1_score: Tenths,
    pub r2_score_normalized: Tenths,
    pub total: Tenths,
    pub decision: TriageDecision,
}

/// The triage rule over already-scaled scores.
pub fn triage_scores(
    r1_score: Tenths,
    r1_recommendation: R1Recommendation,
    r2_score: Tenths,
    r2_verdict: R2Verdict,
    policy: &TriagePolicy,
) -> TriageOutcome {
    let total = Tenths::mean2(r1_score, r2_score);
    let rejecting = matches!(r1_recommendation, R1Recommendation::Reject | R1Recommendation::WeakReject)
        || r2_verdict == R2Verdict::Reject;
    let decision = if rejecting {
        TriageDecision::Reject
    } else if total >= policy.accept_threshold {
        TriageDecision::Accept
    } else {
        TriageDecision::Revise
    };
    TriageOutcome { r1_score, r2_score_normalized: r2_score, total, decision }
}

pub fn triage(r1: &ReviewR1, r2: &ReviewR2, policy: &TriagePolicy) -> TriageOutcome {
    triage_scores(r1.overall, r1.recommendation, normalize_r2(r2), r2.verdict, policy)
}
