//! Fixed-point decimal scores with one fractional digit.
//!
//! Review scores, totals and thresholds are all held as integer tenths so
//! that means and comparisons are exact.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Tenths(u32);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a non-negative decimal: {0:?}")]
pub struct InvalidDecimal(pub String);

impl Tenths {
    pub const ZERO: Tenths = Tenths(0);

    pub const fn from_tenths(t: u32) -> Self {
        Tenths(t)
    }

    pub const fn whole(n: u32) -> Self {
        Tenths(n * 10)
    }

    pub fn tenths(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 10.0
    }

    /// Mean of two values, rounding a trailing half-tenth upward.
    pub fn mean2(a: Tenths, b: Tenths) -> Tenths {
        Tenths((a.0 + b.0).div_ceil(2))
    }

    /// `self / n`, rounded half up to the nearest tenth.
    pub fn div_rounded(self, n: u32) -> Tenths {
        assert!(n > 0, "zero divisor");
        Tenths((2 * self.0 + n) / (2 * n))
    }

    pub fn checked_add(self, other: Tenths) -> Option<Tenths> {
        self.0.checked_add(other.0).map(Tenths)
    }
}

impl fmt::Display for Tenths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.0 / 10, self.0 % 10)
    }
}

impl FromStr for Tenths {
    type Err = InvalidDecimal;

    /// Parses `7`, `7.0`, `7.25` (rounded half up to `7.3`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || InvalidDecimal(s.to_string());
        let s = s.trim();
        let (int, frac) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) || (s.contains('.') && frac.is_empty()) {
            return Err(bad());
        }
        let whole: u32 = int.parse().map_err(|_| bad())?;
        let mut digits = frac.bytes().map(|b| u32::from(b - b'0'));
        let first = digits.next().unwrap_or(0);
        let round_up = digits.next().is_some_and(|d| d >= 5);
        whole
            .checked_mul(10)
            .and_then(|w| w.checked_add(first + u32::from(round_up)))
            .map(Tenths)
            .ok_or_else(bad)
    }
}

impl Serialize for Tenths {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Tenths {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(serde::de::Error::custom(format!("invalid score {v}")));
        }
        Ok(Tenths((v * 10.0).round() as u32))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        assert_eq!("7".parse::<Tenths>().unwrap(), Tenths::whole(7));
        assert_eq!("6.8".parse::<Tenths>().unwrap().to_string(), "6.8");
        assert_eq!("7.25".parse::<Tenths>().unwrap().to_string(), "7.3");
        assert_eq!("7.24".parse::<Tenths>().unwrap().to_string(), "7.2");
        assert!("-1".parse::<Tenths>().is_err());
        assert!("7.".parse::<Tenths>().is_err());
        assert!("abc".parse::<Tenths>().is_err());
    }

    #[test]
    fn mean_of_two() {
        assert_eq!(Tenths::mean2(Tenths::whole(7), Tenths::whole(8)).to_string(), "7.5");
        assert_eq!(Tenths::mean2(Tenths::whole(7), Tenths::from_tenths(68)).to_string(), "6.9");
        assert_eq!(Tenths::mean2(Tenths::from_tenths(73), Tenths::whole(7)).to_string(), "7.2");
    }

    #[test]
    fn rounded_division() {
        assert_eq!(Tenths::whole(24).div_rounded(3), Tenths::whole(8));
        assert_eq!(Tenths::from_tenths(1).div_rounded(3), Tenths::ZERO);
        assert_eq!(Tenths::from_tenths(2).div_rounded(3), Tenths::from_tenths(1));
        assert_eq!(Tenths::from_tenths(205).div_rounded(3).to_string(), "6.8");
    }

    #[test]
    fn json_as_number() {
        assert_eq!(serde_json::to_string(&Tenths::from_tenths(75)).unwrap(), "7.5");
        let back: Tenths = serde_json::from_str("6.8").unwrap();
        assert_eq!(back, Tenths::from_tenths(68));
    }
}
