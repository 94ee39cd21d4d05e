use crate::clock::{format_timestamp, parse_timestamp, Timestamp};
use crate::track::{PaperId, Track};

const BEGIN: &str = "%% hikma-watermark-begin";
const END: &str = "%% hikma-watermark-end";
const TAG: &str = "% watermark: ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Watermark {
    pub paper_id: String,
    pub track_code: String,
    pub time: Timestamp,
}

fn block(paper_id: &PaperId, track: Track, build_time: &Timestamp) -> String {
    let t = format_timestamp(build_time);
    format!(
        "{BEGIN}\n{TAG}{paper_id} {code} {t}\n\\usepackage{{fancyhdr}}\n\\pagestyle{{fancy}}\n\\fancyfoot[C]{{\\footnotesize {paper_id} \\textbar{{}} {code} \\textbar{{}} {t}}}\n{END}\n",
        code = track.code()
    )
}

/// Removes an existing watermark block, if any.
pub fn remove_watermark(source: &str) -> String {
    let Some(start) = source.find(BEGIN) else { return source.to_string() };
    let Some(end_rel) = source[start..].find(END) else { return source.to_string() };
    let mut end = start + end_rel + END.len();
    if source[end..].starts_with('\n') {
        end += 1;
    }
    format!("{}{}", &source[..start], &source[end..])
}

/// Inserts the watermark block into the preamble, replacing any previous
/// one, so repeated application leaves exactly one block.
pub fn apply_watermark(source: &str, paper_id: &PaperId, track: Track, build_time: &Timestamp) -> String {
    let clean = remove_watermark(source);
    let at = clean.find("\\begin{document}").unwrap_or(0);
    format!("{}{}{}", &clean[..at], block(paper_id, track, build_time), &clean[at..])
}

/// Reads the watermark back. Both the comment tag and the visible footer
/// must be present and agree.
pub fn detect_watermark(source: &str) -> Option<Watermark> {
    let start = source.find(BEGIN)?;
    let end = start + source[start..].find(END)?;
    let region = &source[start..end];
    let tag = region.lines().find_map(|l| l.strip_prefix(TAG))?;
    let mut parts = tag.split(' ');
    let (paper_id, code, time) = (parts.next()?, parts.next()?, parts.next()?);
    let footer = format!("\\fancyfoot[C]{{\\footnotesize {paper_id} \\textbar{{}} {code} \\textbar{{}} {time}}}");
    if !region.contains(&footer) {
        return None;
    }
    Some(Watermark { paper_id: paper_id.to_string(), track_code: code.to_string(), time: parse_timestamp(time).ok()? })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "\\documentclass{article}\n\\begin{document}\nHi.\n\\end{document}\n";

    fn t() -> Timestamp {
        parse_timestamp("2025-10-01T12:00:00Z").unwrap()
    }

    #[test]
    fn idempotent_and_detectable() {
        let id = PaperId::parse("PT1-SOCP-01").unwrap();
        let once = apply_watermark(SRC, &id, Track::SocialProgress, &t());
        let twice = apply_watermark(&once, &id, Track::SocialProgress, &t());
        assert_eq!(once, twice);
        assert_eq!(once.matches(BEGIN).count(), 1);
        assert!(once.contains("PT1-SOCP-01"));
        let w = detect_watermark(&once).unwrap();
        assert_eq!((w.paper_id.as_str(), w.track_code.as_str(), w.time), ("PT1-SOCP-01", "SOCP", t()));
        assert_eq!(remove_watermark(&once), SRC);
        assert!(detect_watermark(SRC).is_none());
    }

    #[test]
    fn reapplication_replaces() {
        let id = PaperId::parse("PT1-SOCP-01").unwrap();
        let later = parse_timestamp("2025-10-02T00:00:00Z").unwrap();
        let a = apply_watermark(SRC, &id, Track::SocialProgress, &t());
        let b = apply_watermark(&a, &id, Track::SocialProgress, &later);
        assert_eq!(detect_watermark(&b).unwrap().time, later);
        assert_eq!(b.matches(BEGIN).count(), 1);
    }

    #[test]
    fn distinct_papers_distinct_marks() {
        let a = apply_watermark(SRC, &PaperId::parse("PT1-SOCP-01").unwrap(), Track::SocialProgress, &t());
        let b = apply_watermark(SRC, &PaperId::parse("PT1-SOCP-02").unwrap(), Track::SocialProgress, &t());
        assert_ne!(a, b);
    }

    #[test]
    fn tampered_footer_is_not_detected() {
        let id = PaperId::parse("PT1-SOCP-01").unwrap();
        let a = apply_watermark(SRC, &id, Track::SocialProgress, &t()).replace("\\footnotesize PT1", "\\footnotesize PT9");
        assert!(detect_watermark(&a).is_none());
    }
}
