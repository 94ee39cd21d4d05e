use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Permission {
    Yes,
    No,
    Unknown,
}

impl Permission {
    pub fn as_str(self) -> &'static str {
        match self {
            Permission::Yes => "yes",
            Permission::No => "no",
            Permission::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Permission {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "yes" => Ok(Permission::Yes),
            "no" => Ok(Permission::No),
            "unknown" => Ok(Permission::Unknown),
            _ => Err(format!("bad permission {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permissions {
    pub redistribution: Permission,
    pub commercial_use: Permission,
    pub modification: Permission,
}

impl Permissions {
    pub const UNKNOWN: Permissions = Permissions::new(Permission::Unknown, Permission::Unknown, Permission::Unknown);

    pub const fn new(redistribution: Permission, commercial_use: Permission, modification: Permission) -> Self {
        Permissions { redistribution, commercial_use, modification }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LicenseClass {
    pub license_id: String,
    pub permissions: Permissions,
    /// How the classification was reached, for the record's notes.
    pub basis: String,
}

use Permission::{No, Yes};

// Grants read off each license's deed: (redistribution, commercial, modification).
const TABLE: &[(&str, &[&str], Permissions)] = &[
    ("CC0-1.0", &["CC0", "CC-ZERO", "CC0-PUBLIC-DOMAIN"], Permissions::new(Yes, Yes, Yes)),
    ("CC-BY-4.0", &["CC-BY", "CC-BY-4", "CC-ATTRIBUTION-4.0"], Permissions::new(Yes, Yes, Yes)),
    ("CC-BY-SA-4.0", &["CC-BY-SA", "CC-BY-SA-4"], Permissions::new(Yes, Yes, Yes)),
    ("CC-BY-NC-4.0", &["CC-BY-NC", "CC-BY-NC-4"], Permissions::new(Yes, No, Yes)),
    ("CC-BY-ND-4.0", &["CC-BY-ND", "CC-BY-ND-4"], Permissions::new(Yes, Yes, No)),
    ("CC-BY-NC-SA-4.0", &["CC-BY-NC-SA", "CC-BY-NC-SA-4"], Permissions::new(Yes, No, Yes)),
    ("CC-BY-NC-ND-4.0", &["CC-BY-NC-ND", "CC-BY-NC-ND-4"], Permissions::new(Yes, No, No)),
    ("ODbL-1.0", &["ODBL", "ODBL-1"], Permissions::new(Yes, Yes, Yes)),
    ("ODC-By-1.0", &["ODC-BY"], Permissions::new(Yes, Yes, Yes)),
    ("PDDL", &["PDDL-1.0", "ODC-PDDL", "ODC-PDDL-1.0"], Permissions::new(Yes, Yes, Yes)),
    ("MIT", &[], Permissions::new(Yes, Yes, Yes)),
    ("Apache-2.0", &["APACHE-2"], Permissions::new(Yes, Yes, Yes)),
];

const PROPRIETARY_MARKERS: &[&str] = &["proprietary", "all rights reserved", "not licensed for reuse"];

fn normalize_id(s: &str) -> String {
    let mut out = String::new();
    for c in s.trim().chars() {
        match c {
            ' ' | '_' | '-' | '/' => {
                if !out.ends_with('-') {
                    out.push('-');
                }
            }
            c => out.extend(c.to_uppercase()),
        }
    }
    out.trim_matches('-').to_string()
}

fn lookup(candidate: &str) -> Option<(&'static str, Permissions)> {
    let n = normalize_id(candidate);
    let n = n.strip_suffix("-LICENSE").unwrap_or(&n);
    TABLE
        .iter()
        .find(|(id, aliases, _)| normalize_id(id) == n || aliases.contains(&n))
        .map(|(id, _, p)| (*id, *p))
}

fn spdx_line(text: &str) -> Option<&str> {
    text.lines().find_map(|l| l.trim().strip_prefix("SPDX-License-Identifier:")).map(str::trim)
}

fn negated_before(text: &str, at: usize) -> bool {
    let start = text[..at].char_indices().rev().nth(24).map_or(0, |(i, _)| i);
    let window = &text[start..at];
    ["not ", "no ", "n't ", "without ", "prohibit", "forbid"].iter().any(|n| window.contains(n))
}

/// Classifies a license identifier or free text. Deterministic and total.
///
/// Exact identifiers win. Proprietary markers deny everything. Otherwise a
/// keyword scan can only set the specific permission it speaks to.
pub fn classify_license(text: &str) -> LicenseClass {
    let trimmed = text.trim();
    if let Some((id, p)) = lookup(trimmed).or_else(|| spdx_line(trimmed).and_then(lookup)) {
        return LicenseClass { license_id: id.to_string(), permissions: p, basis: format!("identifier {id}") };
    }
    let lower = trimmed.to_lowercase();
    if let Some(m) = PROPRIETARY_MARKERS.iter().find(|m| lower.contains(*m)) {
        return LicenseClass {
            license_id: "proprietary".to_string(),
            permissions: Permissions::new(No, No, No),
            basis: format!("marker {m:?}"),
        };
    }
    let mut p = Permissions::UNKNOWN;
    let mut hits = Vec::new();
    if ["non-commercial", "noncommercial", "non commercial"].iter().any(|k| lower.contains(k)) {
        p.commercial_use = No;
        hits.push("non-commercial");
    }
    if ["no derivatives", "no derivative", "noderivatives", "no-derivatives"].iter().any(|k| lower.contains(k)) {
        p.modification = No;
        hits.push("no derivatives");
    }
    if let Some(at) = lower.find("redistribut") {
        p.redistribution = if negated_before(&lower, at) { No } else { Yes };
        hits.push("redistribut");
    }
    let basis = if hits.is_empty() { "no identifier or keyword".to_string() } else { format!("keywords {}", hits.join(", ")) };
    LicenseClass { license_id: "unknown".to_string(), permissions: p, basis }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifiers_are_normalized() {
        assert_eq!(classify_license("cc by 4.0").license_id, "CC-BY-4.0");
        assert_eq!(classify_license("CC_BY_NC_4.0").license_id, "CC-BY-NC-4.0");
        assert_eq!(classify_license("odbl").license_id, "ODbL-1.0");
        assert_eq!(classify_license("SPDX-License-Identifier: CC0-1.0\n").license_id, "CC0-1.0");
    }

    #[test]
    fn negated_redistribution_is_denied() {
        let c = classify_license("You may not redistribute this data.");
        assert_eq!(c.permissions.redistribution, No);
        let c = classify_license("Redistribution is permitted with notice.");
        assert_eq!(c.permissions.redistribution, Yes);
        assert_eq!(c.permissions.modification, Permission::Unknown);
    }

    #[test]
    fn proprietary_marker_denies_all() {
        let c = classify_license("Copyright 2024 Example Corp. All rights reserved.");
        assert_eq!(c.permissions, Permissions::new(No, No, No));
    }
}
