//! Shared helpers for the markdown-ish review grammar.

use crate::score::Tenths;

pub(crate) fn norm_heading(s: &str) -> String {
    s.trim()
        .trim_start_matches('#')
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .filter(|w| !w.chars().all(|c| c.is_ascii_digit()))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Splits text into `(normalized heading, body)` pairs on `#` headings.
pub(crate) fn split_sections(text: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        if line.trim_start().starts_with('#') {
            out.push((norm_heading(line), String::new()));
        } else if let Some((_, body)) = out.last_mut() {
            body.push_str(line);
            body.push('\n');
        }
    }
    for (_, body) in &mut out {
        *body = body.trim().to_string();
    }
    out
}

fn strip_marker(line: &str) -> Option<&str> {
    let t = line.trim_start();
    if let Some(rest) = t.strip_prefix("- ").or_else(|| t.strip_prefix("* ")) {
        return Some(rest);
    }
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return Some(r);
        }
    }
    None
}

/// Enumerated items of a list body; continuation lines join the previous
/// item. A body with no markers is one item.
pub(crate) fn items(body: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut saw_marker = false;
    for line in body.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match strip_marker(line) {
            Some(rest) => {
                saw_marker = true;
                out.push(rest.trim().to_string());
            }
            None if saw_marker => {
                let last = out.last_mut().expect("marker seen");
                last.push(' ');
                last.push_str(line.trim());
            }
            None => out.push(line.trim().to_string()),
        }
    }
    if !saw_marker && out.len() > 1 {
        return vec![out.join(" ")];
    }
    out
}

/// `name: value` lines, with optional list marker and `/N` suffix.
pub(crate) fn score_lines(body: &str) -> Vec<(String, String)> {
    body.lines()
        .filter_map(|l| {
            let l = strip_marker(l).unwrap_or(l);
            let (k, v) = l.split_once(':')?;
            let v = v.trim().trim_matches('*').trim();
            let v = v.split_once('/').map_or(v, |(a, _)| a).trim();
            Some((norm_heading(k).replace(' ', "_"), v.to_string()))
        })
        .collect()
}

pub(crate) fn parse_score(raw: &str, lo: u32, hi: u32) -> Result<Tenths, String> {
    let t: Tenths = raw.parse().map_err(|_| format!("unparseable score {raw:?}"))?;
    if t < Tenths::whole(lo) || t > Tenths::whole(hi) {
        return Err(format!("score {raw} outside [{lo},{hi}]"));
    }
    Ok(t)
}

pub(crate) fn verdict_line(body: &str) -> String {
    let line = body.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let line = line.rsplit_once(':').map_or(line, |(_, v)| v);
    line.trim().trim_matches(|c: char| c == '*' || c == '.' || c == '_').trim().to_string()
}

pub(crate) fn norm_token(s: &str) -> String {
    s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn items_handle_markers_and_continuations() {
        assert_eq!(items("1. one\n   more\n2) two\n- three"), vec!["one more", "two", "three"]);
        assert_eq!(items("just prose\nacross lines"), vec!["just prose across lines"]);
        assert!(items("  \n").is_empty());
    }

    #[test]
    fn headings_drop_numbering() {
        assert_eq!(norm_heading("## 2. Technical and Scientific Assessment"), "technical and scientific assessment");
    }
}
