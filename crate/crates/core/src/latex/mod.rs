//! Structural reading of LaTeX sources: sections, citations, floats,
//! bibliography, red revision markup.
//!
//! This is not a TeX engine. It understands the subset of markup that the
//! pipeline produces and checks, with comments masked out first so that
//! commented code never counts.

mod alias;

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use alias::{canonical_section, REQUIRED_SECTIONS};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LatexError {
    #[error("unbalanced braces: {0}")]
    Braces(String),
    #[error("environment mismatch: {0}")]
    Environments(String),
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static regex"))
}

/// Replaces every comment (from an unescaped `%` to end of line) with
/// spaces of the same byte length, so offsets stay valid.
pub fn mask_comments(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    for line in src.split_inclusive('\n') {
        let mut cut = None;
        let b = line.as_bytes();
        for i in 0..b.len() {
            if b[i] == b'%' {
                let backslashes = b[..i].iter().rev().take_while(|c| **c == b'\\').count();
                if backslashes % 2 == 0 {
                    cut = Some(i);
                    break;
                }
            }
        }
        match cut {
            Some(i) => {
                out.push_str(&line[..i]);
                let tail = &line[i..];
                let nl = tail.ends_with('\n');
                out.extend(std::iter::repeat_n(' ', tail.len() - usize::from(nl)));
                if nl {
                    out.push('\n');
                }
            }
            None => out.push_str(line),
        }
    }
    out
}

/// Comments as `(offset of the %, text after it)`.
pub fn comments(src: &str) -> Vec<(usize, String)> {
    let masked = mask_comments(src);
    let mut out = Vec::new();
    let mut offset = 0;
    for (line, mline) in src.split_inclusive('\n').zip(masked.split_inclusive('\n')) {
        if line != mline {
            let at = mline.trim_end_matches('\n').trim_end_matches(' ').len();
            let at = line[at..].find('%').map_or(at, |p| at + p);
            out.push((offset + at, line[at + 1..].trim_end().to_string()));
        }
        offset += line.len();
    }
    out
}

/// Index of the `}` closing the group opened at `open` (which must be `{`).
pub fn matching_brace(src: &str, open: usize) -> Option<usize> {
    let b = src.as_bytes();
    if b.get(open) != Some(&b'{') {
        return None;
    }
    let mut depth = 0usize;
    let mut i = open;
    while i < b.len() {
        match b[i] {
            b'\\' => i += 1,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

/// Content of the first brace group starting at or after `from`, skipping
/// only whitespace and one optional `[...]` argument.
fn group_after(src: &str, from: usize) -> Option<Range<usize>> {
    let rest = &src[from..];
    let mut i = rest.len() - rest.trim_start().len();
    if rest[i..].starts_with('[') {
        i += rest[i..].find(']')? + 1;
        i += rest[i..].len() - rest[i..].trim_start().len();
    }
    let open = from + i;
    let close = matching_brace(src, open)?;
    Some(open + 1..close)
}

fn check_braces(masked: &str) -> Result<(), LatexError> {
    let b = masked.as_bytes();
    let mut depth: i64 = 0;
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'\\' => i += 1,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth < 0 {
                    return Err(LatexError::Braces(format!("unexpected }} at byte {i}")));
                }
            }
            _ => {}
        }
        i += 1;
    }
    if depth != 0 {
        return Err(LatexError::Braces(format!("{depth} group(s) left open")));
    }
    Ok(())
}

fn check_environments(masked: &str) -> Result<(), LatexError> {
    static ENV: OnceLock<Regex> = OnceLock::new();
    let mut stack: Vec<(String, usize)> = Vec::new();
    for c in re(&ENV, r"\\(begin|end)\{([^}]*)\}").captures_iter(masked) {
        let name = c[2].to_string();
        let at = c.get(0).expect("match").start();
        if &c[1] == "begin" {
            stack.push((name, at));
        } else {
            match stack.pop() {
                Some((open, _)) if open == name => {}
                Some((open, o)) => {
                    return Err(LatexError::Environments(format!(
                        "\\end{{{name}}} at byte {at} closes \\begin{{{open}}} from byte {o}"
                    )))
                }
                None => return Err(LatexError::Environments(format!("\\end{{{name}}} at byte {at} without begin"))),
            }
        }
    }
    if let Some((open, at)) = stack.pop() {
        return Err(LatexError::Environments(format!("\\begin{{{open}}} at byte {at} never closed")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub level: u8,
    pub title: String,
    /// Alias-normalized name used for matching.
    pub canonical: String,
    /// Whole section: heading through the start of the next peer section.
    pub range: Range<usize>,
    /// Text after the heading.
    pub body: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Identifier {
    Doi(String),
    Arxiv(String),
    Url(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BibItem {
    pub key: String,
    pub text: String,
    pub identifiers: Vec<Identifier>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub key: String,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FloatKind {
    Figure,
    Table,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lineage {
    Dataset,
    Cited(String),
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Float {
    pub kind: FloatKind,
    pub label: Option<String>,
    pub lineage: Option<Lineage>,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedSpan {
    /// The whole `\textcolor{red}{...}` command.
    pub outer: Range<usize>,
    /// The argument text.
    pub inner: Range<usize>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub source: String,
    pub document_class: Option<String>,
    pub has_document_env: bool,
    pub title: Option<String>,
    pub authors: Vec<String>,
    pub affiliations: Vec<String>,
    pub abstract_text: Option<Range<usize>>,
    pub sections: Vec<Section>,
    pub bibliography: Option<Range<usize>>,
    pub bib_items: Vec<BibItem>,
    pub citations: Vec<Citation>,
    pub floats: Vec<Float>,
    pub red_spans: Vec<RedSpan>,
}

pub fn parse_identifiers(text: &str) -> Vec<Identifier> {
    static DOI: OnceLock<Regex> = OnceLock::new();
    static ARXIV: OnceLock<Regex> = OnceLock::new();
    static URL: OnceLock<Regex> = OnceLock::new();
    let mut out = Vec::new();
    for m in re(&DOI, r"\b10\.\d{4,9}/[^\s{}\\,;]+").find_iter(text) {
        out.push(Identifier::Doi(m.as_str().trim_end_matches('.').to_string()));
    }
    for c in re(&ARXIV, r"(?i)(?:arxiv:|arxiv\.org/abs/)(\d{4}\.\d{4,5}(?:v\d+)?)").captures_iter(text) {
        out.push(Identifier::Arxiv(c[1].to_string()));
    }
    for m in re(&URL, r"https?://[^\s{}\\]+").find_iter(text) {
        let u = m.as_str().trim_end_matches(['.', ',']);
        if url::Url::parse(u).is_ok_and(|p| p.host_str().is_some()) {
            out.push(Identifier::Url(u.to_string()));
        }
    }
    out
}

impl Document {
    pub fn parse(src: &str) -> Result<Document, LatexError> {
        let masked = mask_comments(src);
        check_braces(&masked)?;
        check_environments(&masked)?;

        static CLASS: OnceLock<Regex> = OnceLock::new();
        static CMD: OnceLock<Regex> = OnceLock::new();
        static SECTION: OnceLock<Regex> = OnceLock::new();
        static CITE: OnceLock<Regex> = OnceLock::new();
        static BIBITEM: OnceLock<Regex> = OnceLock::new();
        static FLOAT: OnceLock<Regex> = OnceLock::new();
        static LABEL: OnceLock<Regex> = OnceLock::new();
        static RED: OnceLock<Regex> = OnceLock::new();

        let arg = |name: &str| -> Vec<String> {
            re(&CMD, r"\\(title|author|affil|institute)\b")
                .captures_iter(&masked)
                .filter(|c| &c[1] == name)
                .filter_map(|c| group_after(&masked, c.get(0).expect("match").end()))
                .map(|r| src[r].trim().to_string())
                .collect()
        };

        let document_class = re(&CLASS, r"\\documentclass")
            .find(&masked)
            .and_then(|m| group_after(&masked, m.end()))
            .map(|r| src[r].trim().to_string());
        let has_document_env = masked.contains("\\begin{document}") && masked.contains("\\end{document}");
        let title = arg("title").into_iter().next();
        let authors: Vec<String> = arg("author")
            .iter()
            .flat_map(|a| a.split("\\and").map(|s| s.trim().to_string()).collect::<Vec<_>>())
            .filter(|s| !s.is_empty())
            .collect();
        let mut affiliations = arg("affil");
        affiliations.extend(arg("institute"));

        let env_body = |name: &str| -> Option<Range<usize>> {
            let open = format!("\\begin{{{name}}}");
            let close = format!("\\end{{{name}}}");
            let s = masked.find(&open)? + open.len();
            let e = s + masked[s..].find(&close)?;
            Some(s..e)
        };
        let abstract_text = env_body("abstract");
        let bibliography = masked.find("\\begin{thebibliography}").and_then(|s| {
            let close = "\\end{thebibliography}";
            let e = s + masked[s..].find(close)? + close.len();
            Some(s..e)
        });

        let mut heads: Vec<(u8, String, usize, usize)> = Vec::new();
        for c in re(&SECTION, r"\\(section|subsection|subsubsection)\*?\s*\{").captures_iter(&masked) {
            let m = c.get(0).expect("match");
            let open = m.end() - 1;
            let Some(close) = matching_brace(&masked, open) else { continue };
            let level = match &c[1] {
                "section" => 1,
                "subsection" => 2,
                _ => 3,
            };
            heads.push((level, src[open + 1..close].trim().to_string(), m.start(), close + 1));
        }
        let doc_end = masked
            .find("\\end{document}")
            .unwrap_or(masked.len());
        let sections = heads
            .iter()
            .enumerate()
            .map(|(i, (level, title, start, body_start))| {
                let mut end = heads[i + 1..]
                    .iter()
                    .find(|(l, ..)| l <= level)
                    .map_or(doc_end, |(_, _, s, _)| *s);
                if let Some(b) = &bibliography {
                    if b.start >= *body_start && b.start < end {
                        end = b.start;
                    }
                }
                Section {
                    level: *level,
                    title: title.clone(),
                    canonical: canonical_section(title),
                    range: *start..end,
                    body: *body_start..end,
                }
            })
            .collect();

        let citations = re(&CITE, r"\\(?:no)?cite[a-zA-Z]*\*?\s*(?:\[[^\]]*\]\s*)*\{([^}]*)\}")
            .captures_iter(&masked)
            .flat_map(|c| {
                let offset = c.get(0).expect("match").start();
                c[1].split(',')
                    .map(|k| k.trim().to_string())
                    .filter(|k| !k.is_empty())
                    .map(move |key| Citation { key, offset })
                    .collect::<Vec<_>>()
            })
            .collect();

        let mut bib_items = Vec::new();
        if let Some(b) = &bibliography {
            let region = &masked[b.clone()];
            let starts: Vec<(usize, usize, String)> = re(&BIBITEM, r"\\bibitem\s*(?:\[[^\]]*\])?\s*\{([^}]*)\}")
                .captures_iter(region)
                .map(|c| {
                    let m = c.get(0).expect("match");
                    (b.start + m.start(), b.start + m.end(), c[1].trim().to_string())
                })
                .collect();
            for (i, (_, text_start, key)) in starts.iter().enumerate() {
                let text_end = starts.get(i + 1).map_or(b.end - "\\end{thebibliography}".len(), |n| n.0);
                let text = src[*text_start..text_end].trim().to_string();
                bib_items.push(BibItem { key: key.clone(), identifiers: parse_identifiers(&text), text });
            }
        }

        let all_comments = comments(src);
        let mut floats = Vec::new();
        for c in re(&FLOAT, r"\\begin\{(figure|table)\*?\}").captures_iter(&masked) {
            let m = c.get(0).expect("match");
            let kind = if &c[1] == "figure" { FloatKind::Figure } else { FloatKind::Table };
            let close = format!("\\end{{{}}}", &c[1]);
            let end = masked[m.end()..].find(&close).map_or(masked.len(), |e| m.end() + e + close.len());
            let region = &masked[m.start()..end];
            let label = re(&LABEL, r"\\label\{([^}]*)\}").captures(region).map(|l| l[1].trim().to_string());
            let lineage = all_comments
                .iter()
                .filter(|(at, _)| *at >= m.start() && *at < end)
                .find_map(|(_, text)| text.trim().strip_prefix("lineage:").map(|v| parse_lineage(v.trim())));
            floats.push(Float { kind, label, lineage, range: m.start()..end });
        }

        let red_spans = re(&RED, r"\\textcolor\s*\{\s*red\s*\}\s*\{")
            .find_iter(&masked)
            .filter_map(|m| {
                let open = m.end() - 1;
                let close = matching_brace(&masked, open)?;
                Some(RedSpan { outer: m.start()..close + 1, inner: open + 1..close, text: src[open + 1..close].to_string() })
            })
            .collect();

        Ok(Document {
            source: src.to_string(),
            document_class,
            has_document_env,
            title,
            authors,
            affiliations,
            abstract_text,
            sections,
            bibliography,
            bib_items,
            citations,
            floats,
            red_spans,
        })
    }

    pub fn section(&self, canonical: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.canonical == canonical)
    }

    pub fn section_text(&self, s: &Section) -> &str {
        &self.source[s.body.clone()]
    }

    /// `(level, canonical name)` for every heading, in order.
    pub fn skeleton(&self) -> Vec<(u8, String)> {
        self.sections.iter().map(|s| (s.level, s.canonical.clone())).collect()
    }

    /// Innermost section containing a byte offset.
    pub fn section_at(&self, offset: usize) -> Option<&Section> {
        self.sections.iter().filter(|s| s.range.contains(&offset)).max_by_key(|s| s.level)
    }

    /// The top-level section containing a byte offset.
    pub fn top_section_at(&self, offset: usize) -> Option<&Section> {
        self.sections.iter().rfind(|s| s.level == 1 && s.range.contains(&offset))
    }

    pub fn cite_keys(&self) -> std::collections::BTreeSet<String> {
        self.citations.iter().map(|c| c.key.clone()).collect()
    }

    pub fn labels(&self, kind: FloatKind) -> std::collections::BTreeSet<String> {
        self.floats.iter().filter(|f| f.kind == kind).filter_map(|f| f.label.clone()).collect()
    }

    pub fn has_references(&self) -> bool {
        self.bibliography.is_some()
            || self.section("references").is_some()
            || mask_comments(&self.source).contains("\\bibliography{")
    }

    pub fn has_abstract(&self) -> bool {
        self.abstract_text.is_some() || self.section("abstract").is_some()
    }

    /// Which of the required sections are present.
    pub fn present_required(&self) -> Vec<&'static str> {
        REQUIRED_SECTIONS
            .iter()
            .copied()
            .filter(|name| match *name {
                "abstract" => self.has_abstract(),
                "references" => self.has_references(),
                n => self.section(n).is_some(),
            })
            .collect()
    }
}

fn parse_lineage(v: &str) -> Lineage {
    if v == "dataset" {
        return Lineage::Dataset;
    }
    match v.strip_prefix("cited:") {
        Some(k) if !k.trim().is_empty() => Lineage::Cited(k.trim().to_string()),
        _ => Lineage::Malformed(v.to_string()),
    }
}

fn splice(src: &str, spans: &[RedSpan], keep_inner: bool) -> String {
    let mut out = String::with_capacity(src.len());
    let mut cursor = 0;
    for s in spans {
        if s.outer.start < cursor {
            continue; // nested inside a span already handled
        }
        out.push_str(&src[cursor..s.outer.start]);
        if keep_inner {
            out.push_str(&src[s.inner.clone()]);
        }
        cursor = s.outer.end;
    }
    out.push_str(&src[cursor..]);
    out
}

/// Removes every red span with its content: the pre-revision text.
pub fn strip_red(src: &str) -> Result<String, LatexError> {
    let doc = Document::parse(src)?;
    Ok(splice(src, &doc.red_spans, false))
}

/// Keeps red span content but drops the markup.
pub fn accept_red(src: &str) -> Result<String, LatexError> {
    let doc = Document::parse(src)?;
    Ok(splice(src, &doc.red_spans, true))
}

/// Words of running text: comments, commands and grouping removed, and the
/// preamble skipped when a document environment exists.
pub fn word_count(src: &str) -> usize {
    static CMD: OnceLock<Regex> = OnceLock::new();
    let masked = mask_comments(src);
    let body = match masked.find("\\begin{document}") {
        Some(i) => &masked[i + "\\begin{document}".len()..],
        None => &masked[..],
    };
    let body = body.find("\\end{document}").map_or(body, |i| &body[..i]);
    let stripped = re(&CMD, r"\\[a-zA-Z]+\*?|\\.").replace_all(body, " ");
    stripped
        .split(|c: char| c.is_whitespace() || "{}[]$&~".contains(c))
        .filter(|w| w.chars().any(char::is_alphanumeric))
        .count()
}

pub const WORDS_PER_PAGE: usize = 300;

pub fn estimate_pages(src: &str) -> u32 {
    word_count(src).div_ceil(WORDS_PER_PAGE).max(1) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r"\documentclass{article}
\title{On Things}
\author{A. Person \and B. Person}
\begin{document}
\maketitle
\begin{abstract}
We study things.
\end{abstract}
\section{Introduction}
Things matter \cite{a, b}. % \cite{hidden}
\section{Methods}
We count things.
\subsection{Data}
Rows. \textcolor{red}{Added text with {nested} braces.}
\begin{figure}[h]
%lineage: dataset
\caption{Counts}\label{fig:counts}
\end{figure}
\section{Results}
See \citep[p.~2]{c}.
\begin{table}\label{tab:t}\end{table}
\section{Discussion}
Fine.
\begin{thebibliography}{9}
\bibitem{a} A. Paper. \url{https://example.org/a}
\bibitem{b} B. Paper. doi:10.5281/zenodo.17390176
\bibitem[C]{c} C. Paper. arXiv:2401.01234
\end{thebibliography}
\end{document}
";

    #[test]
    fn parses_structure() {
        let d = Document::parse(SAMPLE).unwrap();
        assert_eq!(d.document_class.as_deref(), Some("article"));
        assert_eq!(d.authors, vec!["A. Person", "B. Person"]);
        assert_eq!(
            d.skeleton(),
            vec![
                (1, "introduction".into()),
                (1, "methodology".into()),
                (2, "data".into()),
                (1, "results".into()),
                (1, "discussion".into())
            ]
        );
        assert_eq!(d.cite_keys().into_iter().collect::<Vec<_>>(), vec!["a", "b", "c"]);
        assert_eq!(d.bib_items.len(), 3);
        assert_eq!(d.bib_items[1].identifiers, vec![Identifier::Doi("10.5281/zenodo.17390176".into())]);
        assert_eq!(d.bib_items[2].identifiers, vec![Identifier::Arxiv("2401.01234".into())]);
        assert_eq!(d.floats.len(), 2);
        assert_eq!(d.floats[0].lineage, Some(Lineage::Dataset));
        assert_eq!(d.floats[1].label.as_deref(), Some("tab:t"));
        assert_eq!(d.red_spans.len(), 1);
        assert_eq!(d.red_spans[0].text, "Added text with {nested} braces.");
        assert_eq!(d.present_required().len(), 6);
        let disc = d.section("discussion").unwrap();
        assert_eq!(d.section_text(disc).trim(), "Fine.");
    }

    #[test]
    fn red_markup_round_trip() {
        let stripped = strip_red(SAMPLE).unwrap();
        assert!(!stripped.contains("Added text"));
        assert!(stripped.contains("Rows. \n"));
        let accepted = accept_red(SAMPLE).unwrap();
        assert!(accepted.contains("Rows. Added text with {nested} braces."));
        assert!(!accepted.contains("textcolor"));
    }

    #[test]
    fn comments_are_masked_but_offsets_hold() {
        let src = "a % b\n50\\% c % d\n";
        let m = mask_comments(src);
        assert_eq!(m.len(), src.len());
        assert_eq!(m, "a    \n50\\% c    \n");
        assert_eq!(comments(src), vec![(2, " b".to_string()), (13, " d".to_string())]);
    }

    #[test]
    fn unbalanced_sources_are_rejected() {
        assert!(matches!(Document::parse("\\section{a"), Err(LatexError::Braces(_))));
        assert!(matches!(Document::parse("\\begin{a}\\end{b}"), Err(LatexError::Environments(_))));
        assert!(matches!(Document::parse("\\begin{a}"), Err(LatexError::Environments(_))));
    }

    #[test]
    fn word_count_skips_markup() {
        assert_eq!(word_count("\\begin{document}\\section{Two Words} and \\emph{three} % not\n\\end{document}"), 4);
        assert_eq!(estimate_pages(""), 1);
    }
}
