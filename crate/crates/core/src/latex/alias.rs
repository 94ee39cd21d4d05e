/// Sections every manuscript must carry, by canonical name.
pub const REQUIRED_SECTIONS: [&str; 6] = ["abstract", "introduction", "methodology", "results", "discussion", "references"];

const ALIASES: &[(&str, &[&str])] = &[
    ("introduction", &["intro", "background and motivation"]),
    (
        "methodology",
        &["methods", "method", "materials and methods", "data and methods", "methods and data", "research design", "approach"],
    ),
    ("results", &["result", "findings", "results and analysis", "empirical results", "analysis and results"]),
    ("discussion", &["discussion and limitations", "limitations and discussion", "general discussion"]),
    // Kept apart from discussion: a paper needs both.
    ("conclusion", &["conclusions", "concluding remarks", "summary and conclusion", "conclusion and future work"]),
    ("references", &["bibliography", "works cited"]),
    ("related work", &["related works", "literature review", "prior work"]),
];

/// Lower-cased title with numbering and punctuation removed, mapped
/// through the alias table.
pub fn canonical_section(title: &str) -> String {
    let norm: String = title
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .filter(|w| !w.chars().all(|c| c.is_ascii_digit()))
        .collect::<Vec<_>>()
        .join(" ");
    for (canon, aliases) in ALIASES {
        if norm == *canon || aliases.contains(&norm.as_str()) {
            return canon.to_string();
        }
    }
    norm
}
