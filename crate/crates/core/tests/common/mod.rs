#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hikma_core::agents::{MockAdapter, ScoreBook};
use hikma_core::archive::{self, ReleaseManifest};
use hikma_core::camera_ready::check_citations;
use hikma_core::clock::{parse_timestamp, SimulatedClock, Timestamp};
use hikma_core::intake::{DatasetMeta, DuaItem};
use hikma_core::latex::{strip_red, Document};
use hikma_core::ledger::{Action, EventView, Ledger, LedgerState};
use hikma_core::orchestrator::config::shipped_datasets;
use hikma_core::orchestrator::{run_pipeline, DatasetFixture, Engine, Gate, GateDecision, RunOptions, RunSummary, Settings};
use hikma_core::presentation::{
    build_avatar_job, plan_slides, segment_narration, validate_avatar_job, AvatarChoice, AvatarJob, Consent,
    AVATAR_LABEL,
};
use hikma_core::review::{R1Category, R1Recommendation, R2Dimension, R2Verdict, ReviewR1, ReviewR2};
use hikma_core::revision::{parse_response_letter, validate_markup, validate_response_letter};
use hikma_core::score::Tenths;
use hikma_core::stage::Stage;
use hikma_core::track::{PaperId, Track};

pub fn start() -> Timestamp {
    parse_timestamp("2025-10-01T09:00:00Z").unwrap()
}

pub fn engine_with(book: ScoreBook) -> Engine {
    Engine::new(Arc::new(Ledger::in_memory()), Arc::new(MockAdapter::new(book)), Settings::default())
}

/// Every shipped dataset through the whole pipeline with the recorded scores.
pub fn full_run(publish_dir: &Path) -> (Engine, RunSummary) {
    let engine = engine_with(ScoreBook::shipped());
    let opts = RunOptions { start: start(), parallelism: 4, publish_dir: publish_dir.to_path_buf() };
    let summary = run_pipeline(&engine, &shipped_datasets(), &opts).unwrap();
    (engine, summary)
}

pub fn fixture(track: Track, url: &str, license: &str) -> DatasetFixture {
    DatasetFixture {
        track,
        url: url.to_string(),
        meta: DatasetMeta {
            title: "Regional Outcomes".into(),
            description: "Outcomes by region and year.".into(),
            variables: vec!["region".into(), "year".into(), "value".into()],
        },
        license: license.to_string(),
        dua: vec![DuaItem::new("attribution", true)],
    }
}

// ---------------------------------------------------------------------------
// Manuscripts and reviews

pub const BASE_TEX: &str = r"\documentclass{article}
\title{Open Data and Regional Outcomes}
\author{Ada Example}
\begin{document}
\maketitle
\begin{abstract}
We study regional outcomes with an open dataset.
\end{abstract}
\section{Introduction}
Outcomes vary widely across regions \cite{src}.
\section{Methodology}
We fit a regression with robust errors \cite{methods}.
\section{Results}
Effects are positive in most regions.
\begin{figure}[h]
%lineage: dataset
\caption{Main effect}\label{fig:main}
\end{figure}
\begin{table}[h]
\caption{Summary}\label{tab:sum}
\end{table}
\section{Discussion}
The effects persist after controls \cite{src}.
\section{Conclusion}
Open data supports the finding.
\begin{thebibliography}{9}
\bibitem{src} Source data. \url{https://data.example.org/outcomes}
\bibitem{methods} J. Tukey. Exploratory analysis. doi:10.1000/xyz123
\end{thebibliography}
\end{document}
";

/// `BASE_TEX` with `text` appended to the end of the named section body.
pub fn append_to(src: &str, heading: &str, text: &str) -> String {
    let next = match heading {
        "Introduction" => "\\section{Methodology}",
        "Methodology" => "\\section{Results}",
        "Results" => "\\section{Discussion}",
        "Discussion" => "\\section{Conclusion}",
        "Conclusion" => "\\begin{thebibliography}",
        _ => panic!("unknown heading {heading}"),
    };
    let at = src.find(next).expect("heading present");
    format!("{}{}\n{}", &src[..at], text, &src[at..])
}

pub const R1_FLAWS: [&str; 2] = [
    "The methodology omits a robustness check against regional fixed effects.",
    "The discussion does not address reverse causality.",
];
pub const R2_WEAKNESSES: [&str; 2] = [
    "Sample construction is described too briefly in the methods.",
    "Limitations are not discussed.",
];

pub fn review_r1() -> ReviewR1 {
    ReviewR1 {
        category_scores: R1Category::ALL.iter().map(|c| (*c, Tenths::whole(7))).collect(),
        overall: Tenths::whole(7),
        recommendation: R1Recommendation::WeakAccept,
        summary: "A clear empirical study.".into(),
        major_flaws: R1_FLAWS.iter().map(|s| s.to_string()).collect(),
        minor_flaws: vec!["Figure labels are small.".into()],
        suggestions: vec!["Add a map.".into()],
    }
}

pub fn review_r2() -> ReviewR2 {
    ReviewR2 {
        dimension_scores: R2Dimension::ALL.iter().map(|d| (*d, Tenths::whole(4))).collect(),
        verdict: R2Verdict::WeakAccept,
        overall_impression: "Promising.".into(),
        strengths: vec!["Open data.".into()],
        weaknesses: R2_WEAKNESSES.iter().map(|s| s.to_string()).collect(),
        recommendations: vec!["Expand the limitations.".into()],
    }
}

/// A revision that adds red text to Methodology and Discussion only.
pub fn revised_tex() -> String {
    let s = append_to(BASE_TEX, "Methodology", "\\textcolor{red}{We add regional fixed effects and describe the sample in detail.}");
    append_to(&s, "Discussion", "\\textcolor{red}{Reverse causality is unlikely given timing; limitations follow.}")
}

// ---------------------------------------------------------------------------
// Validator corpora: (name, input) pairs the validator must accept or reject.

pub struct Corpus {
    pub name: &'static str,
    pub positive: Vec<(String, bool)>,
    pub negative: Vec<(String, bool)>,
}

impl Corpus {
    /// Cases where the validator disagreed with the label.
    pub fn misclassified(&self) -> Vec<String> {
        let wrong_pos = self.positive.iter().filter(|(_, ok)| !ok).map(|(n, _)| format!("+{n}"));
        let wrong_neg = self.negative.iter().filter(|(_, ok)| *ok).map(|(n, _)| format!("-{n}"));
        wrong_pos.chain(wrong_neg).collect()
    }
}

fn run_cases<T>(cases: Vec<(&str, T)>, check: impl Fn(&T) -> bool) -> Vec<(String, bool)> {
    cases.into_iter().map(|(n, c)| (n.to_string(), check(&c))).collect()
}

fn citations_pass(src: &str) -> bool {
    check_citations(src).is_ok_and(|r| r.passed())
}

pub fn citation_corpus() -> Corpus {
    let b = BASE_TEX;
    let with_cite = |t: &str| append_to(b, "Results", t);
    let with_bib = |entry: &str| b.replace("\\end{thebibliography}", &format!("{entry}\n\\end{{thebibliography}}"));
    let positive = vec![
        ("base", b.to_string()),
        ("citep", with_cite("As shown \\citep{src}.")),
        ("citet with page", with_cite("\\citet[p.~4]{methods} says so.")),
        ("two keys", with_cite("Both \\cite{src, methods}.")),
        ("spaced keys", with_cite("Both \\cite{ src ,methods }.")),
        ("arxiv entry", with_bib("\\bibitem{ax} A preprint. arXiv:2401.01234").replace("positive in", "positive \\cite{ax} in")),
        ("arxiv url", with_bib("\\bibitem{ax} A preprint. https://arxiv.org/abs/2310.12345v2")),
        ("uncited entry only warns", with_bib("\\bibitem{extra} Extra. doi:10.5281/zenodo.17390176")),
        ("cite inside comment ignored", with_cite("% \\cite{ghost}")),
        ("labelled bibitem", b.replace("\\bibitem{src}", "\\bibitem[Src]{src}")),
        ("starred cite", with_cite("\\cite*{src}")),
        ("nocite", with_cite("\\nocite{methods}")),
    ];
    let negative = vec![
        ("unknown key", with_cite("\\cite{ghost}.")),
        ("typo key", with_cite("\\cite{metods}.")),
        ("one of two unknown", with_cite("\\cite{src, nowhere}.")),
        ("entry without identifier", with_bib("\\bibitem{bare} A book without any locator.")),
        ("short doi prefix", with_bib("\\bibitem{d} Bad. doi:10.12/x")),
        ("malformed arxiv", with_bib("\\bibitem{a} Bad. arXiv:12.3")),
        ("hostless url", with_bib("\\bibitem{u} Bad. http://")),
        ("unbalanced braces", with_cite("\\cite{src")),
        ("citep unknown", with_cite("\\citep[see][]{absent}")),
        ("bibliography removed", b.replace("\\bibitem{methods} J. Tukey. Exploratory analysis. doi:10.1000/xyz123\n", "")),
        ("caption cite unknown", b.replace("\\caption{Main effect}", "\\caption{Main effect \\cite{figsrc}}")),
    ];
    Corpus { name: "citation integrity", positive: run_cases(positive, |s: &String| citations_pass(s)), negative: run_cases(negative, |s: &String| citations_pass(s)) }
}

fn sections_pass(src: &str) -> bool {
    hikma_core::camera_ready::check_sections(src).is_ok_and(|r| r.passed)
}

pub fn section_corpus() -> Corpus {
    let b = BASE_TEX;
    let positive = vec![
        ("base", b.to_string()),
        ("methods alias", b.replace("\\section{Methodology}", "\\section{Methods}")),
        ("materials alias", b.replace("\\section{Methodology}", "\\section{Materials and Methods}")),
        ("findings alias", b.replace("\\section{Results}", "\\section{Findings}")),
        ("numbered titles", b.replace("\\section{Introduction}", "\\section{1. Introduction}")),
        ("starred sections", b.replace("\\section{Discussion}", "\\section*{Discussion}")),
        ("no conclusion", b.replace("\\section{Conclusion}\nOpen data supports the finding.\n", "")),
        ("bibtex references", {
            let start = b.find("\\begin{thebibliography}").unwrap();
            let end = b.find("\\end{thebibliography}").unwrap() + "\\end{thebibliography}".len();
            format!("{}\\bibliography{{refs}}{}", &b[..start], &b[end..])
        }),
        ("references section", b.replace("\\begin{thebibliography}{9}", "\\section{References}\n\\begin{thebibliography}{9}")),
        ("abstract as section", b.replace("\\begin{abstract}\n", "\\section{Abstract}\n").replace("\\end{abstract}\n", "")),
        ("extra related work", b.replace("\\section{Methodology}", "\\section{Related Work}\nPrior studies.\n\\section{Methodology}")),
        ("discussion alias", b.replace("\\section{Discussion}", "\\section{Discussion and Limitations}")),
    ];
    let negative = vec![
        ("no abstract", b.replace("\\begin{abstract}\nWe study regional outcomes with an open dataset.\n\\end{abstract}\n", "")),
        ("no introduction", b.replace("\\section{Introduction}", "\\section{Overview}")),
        ("no methodology", b.replace("\\section{Methodology}", "\\section{Regression}")),
        ("no results", b.replace("\\section{Results}", "\\section{Effects}")),
        ("no discussion", b.replace("\\section{Discussion}", "\\section{Commentary}")),
        ("no references", {
            let start = b.find("\\begin{thebibliography}").unwrap();
            let end = b.find("\\end{thebibliography}").unwrap() + "\\end{thebibliography}".len();
            format!("{}{}", &b[..start], &b[end..])
        }),
        ("commented methodology", b.replace("\\section{Methodology}", "% \\section{Methodology}")),
        ("conclusion is not discussion", b.replace("\\section{Discussion}", "\\section{Remarks}")),
        ("heading as plain text", b.replace("\\section{Results}", "Results.")),
        ("unparseable", b.replace("\\end{abstract}", "")),
        ("empty", String::new()),
    ];
    Corpus { name: "section completeness", positive: run_cases(positive, |s: &String| sections_pass(s)), negative: run_cases(negative, |s: &String| sections_pass(s)) }
}

/// The markup validator accepts the pair and stripping red text restores
/// the original section skeleton.
fn round_trip_pass(pair: &(String, String)) -> bool {
    let (orig, rev) = pair;
    if validate_markup(orig, rev).is_err() {
        return false;
    }
    let stripped = match strip_red(rev) {
        Ok(s) => s,
        Err(_) => return false,
    };
    match (Document::parse(orig), Document::parse(&stripped)) {
        (Ok(a), Ok(b)) => a.skeleton() == b.skeleton(),
        _ => false,
    }
}

pub fn markup_corpus() -> Corpus {
    let b = BASE_TEX.to_string();
    let red = |t: &str| format!("\\textcolor{{red}}{{{t}}}");
    let pos = |h: &str, t: &str| (b.clone(), append_to(&b, h, &red(t)));
    let positive = vec![
        ("identity", (b.clone(), b.clone())),
        ("methodology paragraph", pos("Methodology", "We add fixed effects.")),
        ("discussion paragraph", pos("Discussion", "Limitations are listed.")),
        ("nested braces", pos("Results", "Values use {grouped} text.")),
        ("new red citation", pos("Introduction", "See also \\cite{methods}.")),
        ("red subsection", pos("Methodology", "\\subsection{Robustness} Checks hold.")),
        ("two spans", (b.clone(), append_to(&append_to(&b, "Methodology", &red("One.")), "Discussion", &red("Two.")))),
        ("inline span", (b.clone(), b.replace("robust errors", &format!("robust errors {}", red("clustered by region"))))),
        ("red figure", pos("Results", "\\begin{figure}[h]\n%lineage: dataset\n\\caption{Extra}\\label{fig:extra}\n\\end{figure}")),
        ("spaced color command", (b.clone(), append_to(&b, "Conclusion", "\\textcolor{ red }{Future work.}"))),
        ("red in abstract", (b.clone(), b.replace("open dataset.", &format!("open dataset. {}", red("We extend it."))))),
    ];
    let negative = vec![
        ("unmarked sentence", (b.clone(), append_to(&b, "Methodology", "We add fixed effects."))),
        ("unmarked word", (b.clone(), b.replace("robust errors", "robust clustered errors"))),
        ("lost citation", (b.clone(), b.replace(" \\cite{methods}", ""))),
        ("citation moved into red", (b.clone(), b.replace("\\cite{methods}", &red("\\cite{methods}")))),
        ("lost figure", (b.clone(), b.replace("\\label{fig:main}", ""))),
        ("lost table", (b.clone(), b.replace("\\label{tab:sum}", ""))),
        ("renamed section", (b.clone(), b.replace("\\section{Results}", "\\section{Findings and Effects}"))),
        ("unmarked section", (b.clone(), append_to(&b, "Results", "\\section{Extra}\nNew."))),
        ("unbalanced red", (b.clone(), append_to(&b, "Methodology", "\\textcolor{red}{Open"))),
        ("original unparseable", (b.replace("\\end{abstract}", ""), b.clone())),
        ("bullets added in red", (b.clone(), append_to(&b, "Methodology", &red("\\begin{itemize}\\item one\\end{itemize}")))),
    ];
    Corpus { name: "revision markup round trip", positive: run_cases(positive, markup_pass), negative: run_cases(negative, markup_pass) }
}

fn markup_pass(pair: &(String, String)) -> bool {
    round_trip_pass(pair) && no_bullets(pair)
}

fn no_bullets(pair: &(String, String)) -> bool {
    validate_markup(&pair.0, &pair.1).is_ok_and(|b| hikma_core::revision::check_no_bullets(&b).is_empty())
}

fn letter_pass(text: &str) -> bool {
    let Ok(letter) = parse_response_letter(text) else { return false };
    let Ok(bundle) = validate_markup(BASE_TEX, &revised_tex()) else { return false };
    validate_response_letter(&letter, &review_r1(), &review_r2(), &bundle).passed()
}

pub fn letter_corpus() -> Corpus {
    let line = |who: &str, status: &str, section: &str, excerpt: &str| format!("{who}\t{status}\t{section}\t{excerpt}");
    let letter = |lines: &[String]| format!("Dear chairs,\n\n[RESPONSE TABLE]\n{}\n[END RESPONSE TABLE]\n", lines.join("\n"));
    let full = || {
        vec![
            line("R1", "fully_addressed", "Methodology", R1_FLAWS[0]),
            line("R1", "fully_addressed", "Discussion", R1_FLAWS[1]),
            line("R2", "fully_addressed", "Methodology", R2_WEAKNESSES[0]),
            line("R2", "fully_addressed", "Discussion", R2_WEAKNESSES[1]),
        ]
    };
    let with = |i: usize, l: String| {
        let mut v = full();
        v[i] = l;
        letter(&v)
    };
    let positive = vec![
        ("complete", letter(&full())),
        ("short excerpts", letter(&[
            line("R1", "fully_addressed", "Methodology", "robustness check"),
            line("R1", "fully_addressed", "Discussion", "reverse causality"),
            line("R2", "fully_addressed", "Methodology", "Sample construction"),
            line("R2", "fully_addressed", "Discussion", "Limitations"),
        ])),
        ("partial in unedited section", with(0, line("R1", "partially_addressed", "Results", R1_FLAWS[0]))),
        ("not applicable", with(3, line("R2", "not_applicable", "Conclusion", R2_WEAKNESSES[1]))),
        ("section alias", with(0, line("R1", "fully_addressed", "Methods", R1_FLAWS[0]))),
        ("abstract reference", with(2, line("R2", "partially_addressed", "Abstract", R2_WEAKNESSES[0]))),
        ("extra minor entry", {
            let mut v = full();
            v.push(line("R1", "partially_addressed", "Results", "Figure labels are small."));
            letter(&v)
        }),
        ("squashed whitespace", with(1, line("R1", "fully_addressed", "Discussion", "does   not address  reverse causality"))),
        ("rationale field", with(3, format!("{}\tAdded a limitations paragraph", line("R2", "fully_addressed", "Discussion", R2_WEAKNESSES[1])))),
        ("reordered", {
            let mut v = full();
            v.reverse();
            letter(&v)
        }),
        ("numbered section ref", with(1, line("R1", "fully_addressed", "4 Discussion", R1_FLAWS[1]))),
    ];
    let negative = vec![
        ("missing R1 item", letter(&full()[1..])),
        ("missing R2 item", letter(&full()[..3])),
        ("wrong reviewer", with(0, line("R2", "fully_addressed", "Methodology", R1_FLAWS[0]))),
        ("dangling section", with(1, line("R1", "fully_addressed", "Appendix Z", R1_FLAWS[1]))),
        ("full without edit", with(0, line("R1", "fully_addressed", "Results", R1_FLAWS[0]))),
        ("no table", "Dear chairs, we addressed every comment.".to_string()),
        ("unterminated table", letter(&full()).replace("[END RESPONSE TABLE]", "")),
        ("bad status", with(2, line("R2", "done", "Methodology", R2_WEAKNESSES[0]))),
        ("too few fields", with(2, "R2\tfully_addressed\tMethodology".into())),
        ("paraphrased excerpt", with(3, line("R2", "fully_addressed", "Discussion", "Limitations need discussion"))),
        ("unknown reviewer", with(3, line("R3", "fully_addressed", "Discussion", R2_WEAKNESSES[1]))),
    ];
    Corpus { name: "response-letter completeness", positive: run_cases(positive, |s: &String| letter_pass(s)), negative: run_cases(negative, |s: &String| letter_pass(s)) }
}

fn sample_job(avatar: AvatarChoice, consent: Option<Consent>) -> AvatarJob {
    let doc = Document::parse(BASE_TEX).unwrap();
    let plan = plan_slides(&doc, 600.0).unwrap();
    let script_text: String = plan.slides.iter().map(|s| format!("[SLIDE {}] Narration for {}.\n", s.index, s.title)).collect();
    let script = segment_narration(&script_text, &plan, 150).unwrap();
    let pid = PaperId::new(Track::SocialProgress, 1);
    let hash = hikma_core::digest::ContentHash::of(BASE_TEX.as_bytes());
    build_avatar_job(&plan, &script, avatar, consent, &pid, Track::SocialProgress, hash, "1920x1080").unwrap()
}

fn job_pass(job: &AvatarJob) -> bool {
    validate_avatar_job(job).is_ok()
}

pub fn avatar_corpus() -> Corpus {
    let lib = |id: &str| sample_job(AvatarChoice::Library(id.into()), None);
    let relabel = |t: &str| {
        let mut j = lib("library:presenter-01");
        j.label_text = t.to_string();
        j
    };
    let granted = Some(Consent { granted: true, scope: "conference talks".into() });
    let positive = vec![
        ("library avatar", lib("library:presenter-01")),
        ("second library avatar", lib("library:presenter-02")),
        ("library avatar with consent", sample_job(AvatarChoice::Library("library:p3".into()), granted.clone())),
        ("likeness with consent", sample_job(AvatarChoice::RealLikeness("person:ada".into()), granted.clone())),
        ("label alone", relabel(AVATAR_LABEL)),
        ("label with prefix", relabel(&format!("Notice: {AVATAR_LABEL}"))),
        ("label with suffix", relabel(&format!("{AVATAR_LABEL} (synthetic voice)"))),
        ("label in sentence", relabel(&format!("This talk uses an {AVATAR_LABEL}."))),
        ("multilingual label", relabel(&format!("{AVATAR_LABEL} / presentador generado por IA"))),
        ("label on new line", relabel(&format!("Track talk\n{AVATAR_LABEL}"))),
        ("4k resolution", {
            let mut j = lib("library:presenter-01");
            j.resolution = "3840x2160".into();
            j
        }),
    ];
    let negative = vec![
        ("empty label", relabel("")),
        ("lower-case label", relabel(&AVATAR_LABEL.to_lowercase())),
        ("truncated label", relabel(&AVATAR_LABEL[..AVATAR_LABEL.len() - 1])),
        ("paraphrased label", relabel("Synthetic presenter")),
        ("no hyphen", relabel(&AVATAR_LABEL.replace('-', " "))),
        ("whitespace only", relabel("   ")),
        ("label split across lines", relabel(&AVATAR_LABEL.replace(' ', "\n"))),
        ("likeness without consent", {
            let mut j = sample_job(AvatarChoice::RealLikeness("person:ada".into()), granted.clone());
            j.consent = None;
            j
        }),
        ("likeness with refused consent", {
            let mut j = sample_job(AvatarChoice::RealLikeness("person:ada".into()), granted.clone());
            j.consent = Some(Consent { granted: false, scope: String::new() });
            j
        }),
        ("disclaimer without label", relabel("Watch the talk")),
        ("label misspelt", relabel("AI-genrated presenter")),
    ];
    Corpus { name: "avatar label presence", positive: run_cases(positive, job_pass), negative: run_cases(negative, job_pass) }
}

pub fn all_corpora() -> Vec<Corpus> {
    vec![citation_corpus(), section_corpus(), markup_corpus(), letter_corpus(), avatar_corpus()]
}

// ---------------------------------------------------------------------------
// Tamper evidence

/// Flips one random byte of one random published file per trial and
/// audits. Returns failing trial descriptions.
pub fn tamper_trials(manifest: &ReleaseManifest, dir: &Path, trials: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for t in 0..trials {
        let entry = &manifest.entries[rng.gen_range(0..manifest.entries.len())];
        let path = dir.join(entry.path());
        let original = std::fs::read(&path).unwrap();
        let mut bytes = original.clone();
        let at = rng.gen_range(0..bytes.len());
        bytes[at] ^= rng.gen_range(1..=255u8);
        std::fs::write(&path, &bytes).unwrap();
        let report = archive::audit(manifest, dir).unwrap();
        let flagged: Vec<(&str, &str)> =
            report.discrepancies.iter().map(|d| (d.paper_id.as_str(), d.role.as_str())).collect();
        if flagged != [(entry.paper_id.as_str(), entry.role.as_str())] {
            failures.push(format!("trial {t}: mutated {}/{} byte {at}, flagged {flagged:?}", entry.paper_id, entry.role));
        }
        std::fs::write(&path, &original).unwrap();
    }
    if !archive::audit(manifest, dir).unwrap().passed() {
        failures.push("restored tree no longer audits clean".into());
    }
    failures
}

// ---------------------------------------------------------------------------
// Randomized engine commands

/// Score rows that exercise every triage outcome, including a Revise
/// followed by a second-round Accept.
pub const MIXED_SCORES: &str = "\
paper_id,round,title,pages,hours,r1_score,r1_recommendation,r2_score,r2_verdict
PT1-SOCP-01,1,Accepted Study,8,1.5,8.0,Accept,8.0,Weak Accept
PT1-SOCP-02,1,Rejected Study,8,1.0,7.0,Accept,4.0,Reject
PT1-SOCP-03,1,Revised Study,9,2.0,6.0,Weak Accept,6.0,Weak Accept
PT1-SOCP-03,2,Revised Study,9,2.0,7.0,Accept,8.0,Weak Accept
PT1-SOCP-04,1,Twice Revised Study,7,1.5,6.0,Weak Accept,6.0,Weak Accept
PT1-SOCP-04,2,Twice Revised Study,7,1.5,6.0,Weak Accept,6.0,Weak Accept
";

pub fn mixed_book() -> ScoreBook {
    ScoreBook::parse_csv(MIXED_SCORES).unwrap()
}

#[derive(Debug, Default)]
pub struct MachineReport {
    pub operations: usize,
    pub accepted: usize,
    pub violations: Vec<String>,
    pub stages_seen: std::collections::BTreeSet<Stage>,
}

/// Independent statement of what must hold when a paper enters `to`.
fn entry_condition(st: &LedgerState, paper: &PaperId, to: Stage) -> Result<(), String> {
    let p = st.paper(paper).ok_or("unknown paper")?;
    let fail = |why: &str| Err(format!("{paper} entered {to} without {why}"));
    match to {
        Stage::Drafted => {
            let ds = st.dataset(&p.dataset_id).ok_or("no dataset")?;
            if ds.ip_risk {
                return fail("a cleared dataset");
            }
            if !p.gate_approved(Gate::DatasetClearance) {
                return fail("dataset clearance");
            }
        }
        Stage::Reviewed if p.stage == Stage::Revised => {
            if p.re_reviews > 0 || p.revision_origin != Some(Stage::TriageRevise) {
                return fail("a first Revise triage");
            }
        }
        Stage::TriageAccept | Stage::TriageRevise | Stage::TriageReject => {
            let t = p.triage.as_ref().ok_or("no triage")?;
            let name = format!("{:?}", t.decision).to_uppercase();
            if !to.to_string().to_uppercase().ends_with(&name) {
                return fail("a matching triage decision");
            }
        }
        Stage::CameraReady if p.stage == Stage::Revised => {
            if p.camera_ready_passed != Some(true) {
                return fail("an all-pass camera-ready report");
            }
            if !p.gate_approved(Gate::RevisionValidation) {
                return fail("revision validation");
            }
        }
        Stage::Archived => {
            if p.manifest_hash.is_none() {
                return fail("a manifest entry");
            }
            if !p.gate_approved(Gate::ReleaseApproval) {
                return fail("release approval");
            }
        }
        _ => {}
    }
    Ok(())
}

/// Checks each newly appended event against a mirror state.
fn check_events(mirror: &mut LedgerState, events: &[hikma_core::ledger::LedgerEvent], report: &mut MachineReport) {
    for ev in events {
        if let Some(pid) = ev.paper_id() {
            if let Some(p) = mirror.paper(pid) {
                if p.stage == Stage::TriageReject {
                    report.violations.push(format!("event {} after {pid} was rejected", ev.seq));
                }
                if let Some(after) = ev.stage {
                    if after != p.stage {
                        if p.stage.transition_kind(after).is_none() {
                            report.violations.push(format!("{pid}: illegal path {} -> {after}", p.stage));
                        }
                        if let Action::Advance { to, .. } = &ev.action {
                            if let Err(e) = entry_condition(mirror, pid, *to) {
                                report.violations.push(e);
                            }
                        }
                    }
                }
            }
        }
        if let Err(e) = mirror.apply(&EventView {
            timestamp: ev.timestamp,
            subject: &ev.subject,
            action: &ev.action,
            actor: &ev.actor,
            hashes: &ev.artifact_hashes,
        }) {
            report.violations.push(format!("mirror rejected event {}: {e}", ev.seq));
        }
        if let Some(s) = ev.stage {
            report.stages_seen.insert(s);
        }
    }
}

/// Issues `ops` random commands across fresh ledgers of five papers each.
pub fn random_commands(ops: usize, seed: u64, scratch: &Path) -> MachineReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MachineReport::default();
    let mut round = 0;
    while report.operations < ops {
        round += 1;
        let engine = engine_with(mixed_book());
        let clock = SimulatedClock::starting_at(start());
        let publish = scratch.join(format!("r{round}"));
        let mut papers = Vec::new();
        for i in 1..=5u32 {
            let license = if i == 5 { "Proprietary. All rights reserved." } else { "CC-BY-4.0" };
            let fx = fixture(Track::SocialProgress, &format!("https://data.example.org/d{i}"), license);
            let ds = engine.register_dataset(&fx, start()).unwrap();
            let pid = PaperId::new(Track::SocialProgress, i);
            engine.register_paper(&pid, &ds.dataset_id, &fx.meta, &clock).unwrap();
            papers.push(pid);
        }
        let mut mirror = LedgerState::default();
        check_events(&mut mirror, &engine.ledger().events(), &mut report);
        let mut seen = engine.ledger().event_count();
        for _ in 0..250 {
            if report.operations >= ops {
                break;
            }
            report.operations += 1;
            let pid = &papers[rng.gen_range(0..papers.len())];
            let stage = Stage::ALL[rng.gen_range(0..Stage::ALL.len())];
            // Half the time, the gate that applies at the paper's stage.
            let fitting = match engine.ledger().paper(pid).map(|p| p.stage) {
                Some(Stage::Registered) => Gate::DatasetClearance,
                Some(Stage::Revised) => Gate::RevisionValidation,
                _ => Gate::ReleaseApproval,
            };
            let gate = if rng.gen_bool(0.5) { fitting } else { Gate::ALL[rng.gen_range(0..Gate::ALL.len())] };
            let decision = if rng.gen_bool(0.8) { GateDecision::Approve } else { GateDecision::Reject };
            // Half the commands are the natural next step, so that walks
            // get deep enough to meet the later gates.
            let natural = match engine.ledger().paper(pid).map(|p| p.stage) {
                Some(Stage::Registered) => 6,
                Some(Stage::Drafted) => 1,
                Some(Stage::Reviewed) => 2,
                Some(Stage::TriageAccept | Stage::TriageRevise) => 3,
                Some(Stage::Revised) => [6, 4, 1][rng.gen_range(0..3)],
                Some(Stage::CameraReady) => 5,
                Some(Stage::Presented) => [10, 6][rng.gen_range(0..2)],
                _ => 0,
            };
            let op = if rng.gen_bool(0.5) { natural } else { rng.gen_range(0..12) };
            let ok = match op {
                0 => engine.generate(pid, &clock).is_ok(),
                1 => engine.review(pid, &clock).is_ok(),
                2 => engine.triage(pid, &clock).is_ok(),
                3 => engine.revise(pid, &clock).is_ok(),
                4 => engine.camera_ready(pid, &clock).is_ok(),
                5 => engine.present(pid, &clock).is_ok(),
                6 | 7 => engine.approve(pid, gate, decision, "random", &clock).is_ok(),
                8 => engine.advance(pid, stage, &clock).is_ok(),
                9 => engine.regress(pid, stage, "random", &clock).is_ok(),
                10 => {
                    let released = engine.release(&publish, &clock).is_ok();
                    engine.archive_approved(&clock).is_ok_and(|a| !a.is_empty()) || released
                }
                _ => engine.assign_authors(pid, &clock).is_ok(),
            };
            if ok {
                report.accepted += 1;
            }
            let events = engine.ledger().events();
            check_events(&mut mirror, &events[seen..], &mut report);
            seen = events.len();
        }
        if replay_differs(engine.ledger(), &mirror) {
            report.violations.push(format!("round {round}: replayed state differs from live state"));
        }
    }
    report
}

fn replay_differs(ledger: &Ledger, mirror: &LedgerState) -> bool {
    let live = ledger.snapshot();
    let stages = |s: &LedgerState| s.papers.iter().map(|(k, v)| (k.clone(), v.stage)).collect::<BTreeMap<_, _>>();
    stages(&live) != stages(mirror)
}

/// Runs the safety checks over a complete event log.
pub fn log_violations(ledger: &Ledger) -> Vec<String> {
    let mut report = MachineReport::default();
    check_events(&mut LedgerState::default(), &ledger.events(), &mut report);
    report.violations
}
