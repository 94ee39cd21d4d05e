use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::template::TemplateRole;
use crate::digest::ContentHash;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub agent_id: String,
    pub model_family: String,
    pub model_version: String,
    pub role: TemplateRole,
    pub config: BTreeMap<String, String>,
    pub config_fingerprint: ContentHash,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProfileError {
    #[error("agent id {0:?} must be non-empty and use only [A-Za-z0-9._:-]")]
    BadAgentId(String),
}

/// Digest over everything that determines model behaviour. The role and
/// agent id are left out so that one configuration wearing two hats is
/// still recognized as one configuration.
pub fn fingerprint(model_family: &str, model_version: &str, config: &BTreeMap<String, String>) -> ContentHash {
    let mut canon = format!("family={model_family}\nversion={model_version}\n");
    for (k, v) in config {
        canon.push_str(&format!("{k}={v}\n"));
    }
    ContentHash::of(canon.as_bytes())
}

impl AgentProfile {
    pub fn new(
        agent_id: &str,
        model_family: &str,
        model_version: &str,
        role: TemplateRole,
        config: BTreeMap<String, String>,
    ) -> Result<Self, ProfileError> {
        let ok = !agent_id.is_empty()
            && agent_id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | ':' | '-'));
        if !ok {
            return Err(ProfileError::BadAgentId(agent_id.to_string()));
        }
        Ok(AgentProfile {
            agent_id: agent_id.to_string(),
            model_family: model_family.to_string(),
            model_version: model_version.to_string(),
            role,
            config_fingerprint: fingerprint(model_family, model_version, &config),
            config,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("conflict of interest: {reviewer} shares configuration {fingerprint} with {author}")]
pub struct CoiViolation {
    pub author: String,
    pub reviewer: String,
    pub fingerprint: ContentHash,
}

pub fn check_coi(author: &AgentProfile, reviewer: &AgentProfile) -> Result<(), CoiViolation> {
    if author.config_fingerprint == reviewer.config_fingerprint {
        return Err(CoiViolation {
            author: author.agent_id.clone(),
            reviewer: reviewer.agent_id.clone(),
            fingerprint: author.config_fingerprint.clone(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(id: &str, family: &str, version: &str, role: TemplateRole) -> AgentProfile {
        AgentProfile::new(id, family, version, role, BTreeMap::from([("temperature".into(), "0.2".into())])).unwrap()
    }

    #[test]
    fn identical_configuration_is_a_violation() {
        let g = p("gen", "fam", "1", TemplateRole::Generation);
        let r = p("rev", "fam", "1", TemplateRole::Reviewer1);
        assert!(check_coi(&g, &r).is_err());
    }

    #[test]
    fn version_enters_the_fingerprint() {
        let g = p("gen", "fam", "1", TemplateRole::Generation);
        let r = p("rev", "fam", "2", TemplateRole::Reviewer1);
        assert_ne!(g.config_fingerprint, r.config_fingerprint);
        assert!(check_coi(&g, &r).is_ok());
    }

    #[test]
    fn fingerprint_is_deterministic() {
        let c = BTreeMap::from([("b".to_string(), "2".to_string()), ("a".to_string(), "1".to_string())]);
        assert_eq!(fingerprint("f", "v", &c), fingerprint("f", "v", &c.clone()));
        assert_ne!(fingerprint("f", "v", &c), fingerprint("f", "v", &BTreeMap::new()));
    }

    #[test]
    fn agent_ids_are_restricted() {
        assert!(AgentProfile::new("a|b", "f", "v", TemplateRole::Slides, BTreeMap::new()).is_err());
        assert!(AgentProfile::new("", "f", "v", TemplateRole::Slides, BTreeMap::new()).is_err());
        assert!(AgentProfile::new("mock:rev-1.a_b", "f", "v", TemplateRole::Slides, BTreeMap::new()).is_ok());
    }
}
