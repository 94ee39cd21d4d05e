//! Conference tracks and paper identifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Track {
    SocialProgress,
    ProductiveEconomies,
    PrecisionHealth,
    Sustainability,
    ArtificialIntelligence,
}

impl Track {
    pub const ALL: [Track; 5] = [
        Track::SocialProgress,
        Track::ProductiveEconomies,
        Track::PrecisionHealth,
        Track::Sustainability,
        Track::ArtificialIntelligence,
    ];

    /// Ordinal used in the `PT<n>` prefix of paper identifiers.
    pub fn number(self) -> u8 {
        match self {
            Track::SocialProgress => 1,
            Track::ProductiveEconomies => 2,
            Track::PrecisionHealth => 3,
            Track::Sustainability => 4,
            Track::ArtificialIntelligence => 5,
        }
    }

    /// Four-letter track code embedded in paper ids and watermarks.
    pub fn code(self) -> &'static str {
        match self {
            Track::SocialProgress => "SOCP",
            Track::ProductiveEconomies => "PECO",
            Track::PrecisionHealth => "PHLT",
            Track::Sustainability => "SUST",
            Track::ArtificialIntelligence => "ARTI",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Track::SocialProgress => "Social Progress",
            Track::ProductiveEconomies => "Productive Economies",
            Track::PrecisionHealth => "Precision Health",
            Track::Sustainability => "Sustainability",
            Track::ArtificialIntelligence => "Artificial Intelligence",
        }
    }

    pub fn from_code(code: &str) -> Option<Track> {
        Track::ALL.into_iter().find(|t| t.code() == code)
    }
}

impl fmt::Display for Track {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown track {0:?}")]
pub struct UnknownTrack(pub String);

impl FromStr for Track {
    type Err = UnknownTrack;

    /// Accepts the display name, the variant name, or the four-letter code.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let squashed: String = s.chars().filter(|c| c.is_alphanumeric()).collect();
        Track::ALL
            .into_iter()
            .find(|t| {
                t.code().eq_ignore_ascii_case(&squashed)
                    || format!("{t:?}").eq_ignore_ascii_case(&squashed)
            })
            .ok_or_else(|| UnknownTrack(s.to_string()))
    }
}

/// Paper identifier of the form `PT<track#>-<CODE>-<NN>`, e.g. `PT1-SOCP-01`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PaperId(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed paper id {0:?}: expected PT<n>-<CODE>-<NN> with a matching track")]
pub struct InvalidPaperId(pub String);

impl PaperId {
    pub fn new(track: Track, serial: u32) -> Self {
        PaperId(format!("PT{}-{}-{:02}", track.number(), track.code(), serial))
    }

    pub fn parse(s: &str) -> Result<Self, InvalidPaperId> {
        let bad = || InvalidPaperId(s.to_string());
        let mut parts = s.split('-');
        let (prefix, code, serial) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(p), Some(c), Some(n), None) => (p, c, n),
            _ => return Err(bad()),
        };
        let number: u8 = prefix.strip_prefix("PT").and_then(|n| n.parse().ok()).ok_or_else(bad)?;
        let track = Track::from_code(code).ok_or_else(bad)?;
        if track.number() != number {
            return Err(bad());
        }
        if serial.len() < 2 || !serial.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        Ok(PaperId(s.to_string()))
    }

    pub fn track(&self) -> Track {
        Track::from_code(&self.0[4..8]).expect("validated on construction")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PaperId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for PaperId {
    type Err = InvalidPaperId;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PaperId::parse(s)
    }
}

impl TryFrom<String> for PaperId {
    type Error = InvalidPaperId;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        PaperId::parse(&s)
    }
}

impl From<PaperId> for String {
    fn from(p: PaperId) -> String {
        p.0
    }
}
