use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::ContentHash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateRole {
    Generation,
    Reviewer1,
    Reviewer2,
    Revision,
    ResponseLetter,
    Slides,
    Narration,
}

impl TemplateRole {
    pub const ALL: [TemplateRole; 7] = [
        TemplateRole::Generation,
        TemplateRole::Reviewer1,
        TemplateRole::Reviewer2,
        TemplateRole::Revision,
        TemplateRole::ResponseLetter,
        TemplateRole::Slides,
        TemplateRole::Narration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateRole::Generation => "generation",
            TemplateRole::Reviewer1 => "reviewer1",
            TemplateRole::Reviewer2 => "reviewer2",
            TemplateRole::Revision => "revision",
            TemplateRole::ResponseLetter => "response_letter",
            TemplateRole::Slides => "slides",
            TemplateRole::Narration => "narration",
        }
    }
}

impl fmt::Display for TemplateRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateRole {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        TemplateRole::ALL.into_iter().find(|r| r.as_str() == s).ok_or_else(|| format!("unknown template role {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("already locked")]
    AlreadyLocked,
    #[error("template {0} is locked; body is immutable")]
    Immutable(String),
    #[error("template {0} is not locked")]
    Unlocked(String),
    #[error("missing bindings: {}", .0.join(", "))]
    MissingBindings(Vec<String>),
    #[error("template syntax at byte {at}: {reason}")]
    Syntax { at: usize, reason: String },
    #[error("front matter: {0}")]
    FrontMatter(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

/// Splits a body into literal text and `{name}` slots. `{{` and `}}` are
/// literal braces; any other brace is a syntax error.
fn tokenize(body: &str) -> Result<Vec<Piece>, TemplateError> {
    let bytes = body.as_bytes();
    let mut out = Vec::new();
    let mut text = String::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                text.push('{');
                i += 2;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                text.push('}');
                i += 2;
            }
            b'{' => {
                let end = body[i + 1..].find('}').map(|e| i + 1 + e).ok_or_else(|| TemplateError::Syntax {
                    at: i,
                    reason: "unclosed placeholder".into(),
                })?;
                let name = &body[i + 1..end];
                let valid = name.chars().next().is_some_and(|c| c.is_ascii_lowercase() || c == '_')
                    && name.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
                if !valid {
                    return Err(TemplateError::Syntax { at: i, reason: format!("bad placeholder {name:?}") });
                }
                if !text.is_empty() {
                    out.push(Piece::Text(std::mem::take(&mut text)));
                }
                out.push(Piece::Slot(name.to_string()));
                i = end + 1;
            }
            b'}' => return Err(TemplateError::Syntax { at: i, reason: "stray closing brace".into() }),
            _ => {
                let ch = body[i..].chars().next().expect("in bounds");
                text.push(ch);
                i += ch.len_utf8();
            }
        }
    }
    if !text.is_empty() {
        out.push(Piece::Text(text));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub role: TemplateRole,
    body: String,
    lock_hash: Option<ContentHash>,
}

#[derive(Deserialize)]
struct FrontMatter {
    template_id: String,
    role: String,
}

impl PromptTemplate {
    pub fn new(template_id: impl Into<String>, role: TemplateRole, body: impl Into<String>) -> Result<Self, TemplateError> {
        let body = body.into();
        tokenize(&body)?;
        Ok(PromptTemplate { template_id: template_id.into(), role, body, lock_hash: None })
    }

    /// Parses an asset file: a `---` delimited YAML block, then the body.
    pub fn from_asset(text: &str) -> Result<Self, TemplateError> {
        let rest = text
            .strip_prefix("---\n")
            .ok_or_else(|| TemplateError::FrontMatter("asset must start with ---".into()))?;
        let (yaml, body) = rest
            .split_once("\n---\n")
            .ok_or_else(|| TemplateError::FrontMatter("unterminated front matter".into()))?;
        let fm: FrontMatter = serde_yaml::from_str(yaml).map_err(|e| TemplateError::FrontMatter(e.to_string()))?;
        let role = fm.role.parse().map_err(TemplateError::FrontMatter)?;
        PromptTemplate::new(fm.template_id, role, body)
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn lock_hash(&self) -> Option<&ContentHash> {
        self.lock_hash.as_ref()
    }

    pub fn is_locked(&self) -> bool {
        self.lock_hash.is_some()
    }

    pub fn lock(&mut self) -> Result<ContentHash, TemplateError> {
        if self.lock_hash.is_some() {
            return Err(TemplateError::AlreadyLocked);
        }
        let h = ContentHash::of(self.body.as_bytes());
        self.lock_hash = Some(h.clone());
        Ok(h)
    }

    pub fn set_body(&mut self, body: impl Into<String>) -> Result<(), TemplateError> {
        if self.is_locked() {
            return Err(TemplateError::Immutable(self.template_id.clone()));
        }
        let body = body.into();
        tokenize(&body)?;
        self.body = body;
        Ok(())
    }

    pub fn placeholders(&self) -> BTreeSet<String> {
        tokenize(&self.body)
            .expect("validated at construction")
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s),
                Piece::Text(_) => None,
            })
            .collect()
    }

    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        if !self.is_locked() {
            return Err(TemplateError::Unlocked(self.template_id.clone()));
        }
        let pieces = tokenize(&self.body).expect("validated at construction");
        let missing: BTreeSet<String> = pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(s) if !bindings.contains_key(s) => Some(s.clone()),
                _ => None,
            })
            .collect();
        if !missing.is_empty() {
            return Err(TemplateError::MissingBindings(missing.into_iter().collect()));
        }
        Ok(pieces
            .iter()
            .map(|p| match p {
                Piece::Text(t) => t.as_str(),
                Piece::Slot(s) => bindings[s].as_str(),
            })
            .collect())
    }

    /// Whether `prompt` could have been produced by rendering this body.
    pub fn matches_rendering(&self, prompt: &str) -> bool {
        let mut pattern = String::from(r"\A");
        for p in tokenize(&self.body).expect("validated at construction") {
            match p {
                Piece::Text(t) => pattern.push_str(&regex::escape(&t)),
                Piece::Slot(_) => pattern.push_str("(?s:.*?)"),
            }
        }
        pattern.push_str(r"\z");
        regex::Regex::new(&pattern).is_ok_and(|re| re.is_match(prompt))
    }
}

const SHIPPED: [&str; 7] = [
    include_str!("../../templates/generation.md"),
    include_str!("../../templates/reviewer1.md"),
    include_str!("../../templates/reviewer2.md"),
    include_str!("../../templates/revision.md"),
    include_str!("../../templates/response_letter.md"),
    include_str!("../../templates/slides.md"),
    include_str!("../../templates/narration.md"),
];

/// Locked templates keyed by role.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    by_role: BTreeMap<TemplateRole, PromptTemplate>,
}

impl TemplateSet {
    /// The seven built-in templates, locked.
    pub fn shipped() -> Self {
        let templates = SHIPPED.iter().map(|t| PromptTemplate::from_asset(t).expect("shipped template parses"));
        TemplateSet::locked(templates).expect("shipped set is complete")
    }

    pub fn locked(templates: impl IntoIterator<Item = PromptTemplate>) -> Result<Self, TemplateError> {
        let mut by_role = BTreeMap::new();
        for mut t in templates {
            if !t.is_locked() {
                t.lock()?;
            }
            by_role.insert(t.role, t);
        }
        let missing: Vec<String> =
            TemplateRole::ALL.iter().filter(|r| !by_role.contains_key(*r)).map(|r| r.to_string()).collect();
        if !missing.is_empty() {
            return Err(TemplateError::FrontMatter(format!("no template for roles {}", missing.join(", "))));
        }
        Ok(TemplateSet { by_role })
    }

    pub fn get(&self, role: TemplateRole) -> &PromptTemplate {
        &self.by_role[&role]
    }

    pub fn by_lock(&self, lock: &ContentHash) -> Option<&PromptTemplate> {
        self.by_role.values().find(|t| t.lock_hash() == Some(lock))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.by_role.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn render_substitutes_and_escapes() {
        let mut t = PromptTemplate::new("t", TemplateRole::Generation, "Study of {title} in {{braces}}").unwrap();
        t.lock().unwrap();
        assert_eq!(t.render(&b(&[("title", "X")])).unwrap(), "Study of X in {braces}");
    }

    #[test]
    fn missing_binding_names_the_slot() {
        let mut t = PromptTemplate::new("t", TemplateRole::Generation, "Study of {title} {year}").unwrap();
        t.lock().unwrap();
        let e = t.render(&b(&[("year", "2025")])).unwrap_err();
        assert_eq!(e, TemplateError::MissingBindings(vec!["title".into()]));
        assert!(e.to_string().contains("title"));
    }

    #[test]
    fn lock_rules() {
        let mut t = PromptTemplate::new("t", TemplateRole::Slides, "x {a}").unwrap();
        assert!(matches!(t.render(&b(&[("a", "1")])), Err(TemplateError::Unlocked(_))));
        t.lock().unwrap();
        assert_eq!(t.lock().unwrap_err().to_string(), "already locked");
        assert!(matches!(t.set_body("y"), Err(TemplateError::Immutable(_))));
    }

    #[test]
    fn rejects_stray_braces() {
        assert!(PromptTemplate::new("t", TemplateRole::Slides, r"\section{Intro Part}").is_err());
        assert!(PromptTemplate::new("t", TemplateRole::Slides, "a } b").is_err());
    }

    #[test]
    fn rendering_is_recognized() {
        let mut t = PromptTemplate::new("t", TemplateRole::Slides, "A {x} B {y} C").unwrap();
        t.lock().unwrap();
        let r = t.render(&b(&[("x", "1\n2"), ("y", "")])).unwrap();
        assert!(t.matches_rendering(&r));
        assert!(!t.matches_rendering("A 1 B 2 D"));
    }

    #[test]
    fn shipped_set_is_complete_and_locked() {
        let set = TemplateSet::shipped();
        for r in TemplateRole::ALL {
            let t = set.get(r);
            assert_eq!(t.role, r);
            assert_eq!(t.lock_hash().unwrap(), &ContentHash::of(t.body().as_bytes()));
        }
    }
}
