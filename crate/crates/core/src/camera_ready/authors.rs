use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digest::ContentHash;
use crate::track::PaperId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FictionalAuthor {
    pub name: String,
    pub origin_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FictionalAuthorSet {
    pub authors: Vec<FictionalAuthor>,
    pub institution: String,
    pub seed: u64,
    pub locked: bool,
}

impl FictionalAuthorSet {
    pub fn names(&self) -> Vec<&str> {
        self.authors.iter().map(|a| a.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuthorError {
    #[error("name pool exhausted: {available} unused names, need at least 3")]
    PoolExhausted { available: usize },
    #[error("no institution outside the denylist after {attempts} draws")]
    DenylistHit { attempts: u32 },
    #[error("name pool line {line}: {reason}")]
    BadPool { line: usize, reason: String },
    #[error("institution tokens: {0}")]
    BadTokens(String),
}

/// Curated fictional names, one `name<TAB>origin_tag` per line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamePool {
    entries: Vec<FictionalAuthor>,
}

impl NamePool {
    pub fn parse(text: &str) -> Result<Self, AuthorError> {
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, tag) = line
                .split_once('\t')
                .ok_or_else(|| AuthorError::BadPool { line: i + 1, reason: "expected name<TAB>origin_tag".into() })?;
            let name = name.trim().to_string();
            if name.is_empty() || !seen.insert(name.clone()) {
                return Err(AuthorError::BadPool { line: i + 1, reason: format!("empty or duplicate name {name:?}") });
            }
            entries.push(FictionalAuthor { name, origin_tag: tag.trim().to_string() });
        }
        Ok(NamePool { entries })
    }

    pub fn shipped() -> Self {
        NamePool::parse(include_str!("../../fixtures/name_pool.tsv")).expect("shipped pool parses")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Vocabulary for `<universe token> <institution form> <field>` names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstitutionTokens {
    pub tokens: Vec<String>,
    pub forms: Vec<String>,
    pub fields: Vec<String>,
}

impl InstitutionTokens {
    /// Three `[tokens]`/`[forms]`/`[fields]` blocks, one entry per line.
    pub fn parse(text: &str) -> Result<Self, AuthorError> {
        let mut t = InstitutionTokens { tokens: vec![], forms: vec![], fields: vec![] };
        let mut current: Option<&mut Vec<String>> = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            match line {
                "[tokens]" => current = Some(&mut t.tokens),
                "[forms]" => current = Some(&mut t.forms),
                "[fields]" => current = Some(&mut t.fields),
                entry => current
                    .as_mut()
                    .ok_or_else(|| AuthorError::BadTokens(format!("{entry:?} before any block")))?
                    .push(entry.to_string()),
            }
        }
        if t.tokens.is_empty() || t.forms.is_empty() || t.fields.is_empty() {
            return Err(AuthorError::BadTokens("every block needs at least one entry".into()));
        }
        Ok(t)
    }

    pub fn shipped() -> Self {
        InstitutionTokens::parse(include_str!("../../fixtures/institution_tokens.txt")).expect("shipped tokens parse")
    }
}

/// Real institution names that a synthetic name must never equal.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Denylist {
    names: BTreeSet<String>,
}

fn fold(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl Denylist {
    pub fn parse(text: &str) -> Self {
        Denylist {
            names: text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(fold).collect(),
        }
    }

    pub fn shipped() -> Self {
        Denylist::parse(include_str!("../../fixtures/institution_denylist.txt"))
    }

    pub fn contains(&self, institution: &str) -> bool {
        self.names.contains(&fold(institution))
    }
}

pub const MAX_INSTITUTION_DRAWS: u32 = 16;

fn rng_for(seed: u64, paper_id: &PaperId) -> ChaCha8Rng {
    let mut material = seed.to_be_bytes().to_vec();
    material.extend_from_slice(paper_id.as_str().as_bytes());
    let digest = hex::decode(ContentHash::of(&material).as_str()).expect("hex digest");
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Draws 2–3 unused names and a synthetic institution. A pure function of
/// its inputs; the result comes back locked.
pub fn assign_fictional_authors(
    pool: &NamePool,
    tokens: &InstitutionTokens,
    denylist: &Denylist,
    seed: u64,
    paper_id: &PaperId,
    prior_assignments: &BTreeSet<String>,
) -> Result<FictionalAuthorSet, AuthorError> {
    let unused: Vec<&FictionalAuthor> = pool.entries.iter().filter(|a| !prior_assignments.contains(&a.name)).collect();
    if unused.len() < 3 {
        return Err(AuthorError::PoolExhausted { available: unused.len() });
    }
    let mut rng = rng_for(seed, paper_id);
    let count = rng.gen_range(2..=3);
    let authors: Vec<FictionalAuthor> = unused.choose_multiple(&mut rng, count).map(|a| (*a).clone()).collect();
    for _ in 0..MAX_INSTITUTION_DRAWS {
        let institution = format!(
            "{} {} {}",
            tokens.tokens.choose(&mut rng).expect("non-empty"),
            tokens.forms.choose(&mut rng).expect("non-empty"),
            tokens.fields.choose(&mut rng).expect("non-empty"),
        );
        if !denylist.contains(&institution) {
            return Ok(FictionalAuthorSet { authors, institution, seed, locked: true });
        }
    }
    Err(AuthorError::DenylistHit { attempts: MAX_INSTITUTION_DRAWS })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pid(s: &str) -> PaperId {
        PaperId::parse(s).unwrap()
    }

    #[test]
    fn deterministic_per_seed_and_paper() {
        let (pool, tokens, deny) = (NamePool::shipped(), InstitutionTokens::shipped(), Denylist::shipped());
        let a = assign_fictional_authors(&pool, &tokens, &deny, 7, &pid("PT1-SOCP-01"), &BTreeSet::new()).unwrap();
        let b = assign_fictional_authors(&pool, &tokens, &deny, 7, &pid("PT1-SOCP-01"), &BTreeSet::new()).unwrap();
        assert_eq!(a, b);
        assert!((2..=3).contains(&a.authors.len()));
        assert!(a.locked);
    }

    #[test]
    fn prior_names_are_excluded() {
        let (pool, tokens, deny) = (NamePool::shipped(), InstitutionTokens::shipped(), Denylist::shipped());
        let a = assign_fictional_authors(&pool, &tokens, &deny, 7, &pid("PT1-SOCP-01"), &BTreeSet::new()).unwrap();
        let prior: BTreeSet<String> = a.names().into_iter().map(String::from).collect();
        let b = assign_fictional_authors(&pool, &tokens, &deny, 7, &pid("PT1-SOCP-02"), &prior).unwrap();
        assert!(b.names().iter().all(|n| !prior.contains(*n)));
    }

    #[test]
    fn exhausted_pool_is_an_error() {
        let pool = NamePool::parse("A B\tinvented\nC D\tinvented\n").unwrap();
        let e = assign_fictional_authors(&pool, &InstitutionTokens::shipped(), &Denylist::default(), 1, &pid("PT1-SOCP-01"), &BTreeSet::new());
        assert_eq!(e.unwrap_err(), AuthorError::PoolExhausted { available: 2 });
    }

    #[test]
    fn denylist_forces_resampling_then_fails() {
        let tokens = InstitutionTokens {
            tokens: vec!["Real".into()],
            forms: vec!["University of".into()],
            fields: vec!["Somewhere".into()],
        };
        let deny = Denylist::parse("Real University of Somewhere\n");
        let e = assign_fictional_authors(&NamePool::shipped(), &tokens, &deny, 1, &pid("PT1-SOCP-01"), &BTreeSet::new());
        assert_eq!(e.unwrap_err(), AuthorError::DenylistHit { attempts: MAX_INSTITUTION_DRAWS });
    }

    #[test]
    fn duplicate_pool_names_rejected() {
        assert!(NamePool::parse("A\tx\nA\ty\n").is_err());
        assert!(NamePool::parse("no tab here\n").is_err());
    }
}
