//! Execution origins and compact origin sets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Execution-provenance label carried by every simulated process.
///
/// Variants are declared in canonical enumeration order; that order is used
/// whenever origins are listed (policy formatting, reports, counter tables).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    /// Early-boot tasks. Exempt from enforcement; closed once the system is ready.
    Bootstrap,
    /// Local console or GUI terminal.
    Physical,
    /// Remote login (SSH and friends).
    Remote,
    /// System services without a controlling terminal.
    Service,
    /// Provider-authenticated cloud management sessions.
    ControlPlane,
    /// Provenance could not be established.
    Unknown,
}

impl Origin {
    pub const ALL: [Origin; 6] = [
        Origin::Bootstrap,
        Origin::Physical,
        Origin::Remote,
        Origin::Service,
        Origin::ControlPlane,
        Origin::Unknown,
    ];

    /// Origins that may appear in a policy rule (everything but `Bootstrap`).
    pub const RULE_ORIGINS: [Origin; 5] = [
        Origin::Physical,
        Origin::Remote,
        Origin::Service,
        Origin::ControlPlane,
        Origin::Unknown,
    ];

    /// Lowercase name used by the policy language and counter tables.
    pub const fn as_str(self) -> &'static str {
        match self {
            Origin::Bootstrap => "bootstrap",
            Origin::Physical => "physical",
            Origin::Remote => "remote",
            Origin::Service => "service",
            Origin::ControlPlane => "control-plane",
            Origin::Unknown => "unknown",
        }
    }

    /// Uppercase label used in transcripts.
    pub const fn label(self) -> &'static str {
        match self {
            Origin::Bootstrap => "BOOTSTRAP",
            Origin::Physical => "PHYSICAL",
            Origin::Remote => "REMOTE",
            Origin::Service => "SERVICE",
            Origin::ControlPlane => "CONTROL_PLANE",
            Origin::Unknown => "UNKNOWN",
        }
    }

    const fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub(crate) const fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown origin `{0}`")]
pub struct UnknownOrigin(pub String);

impl FromStr for Origin {
    type Err = UnknownOrigin;

    /// Accepts the lowercase policy-language names and the uppercase labels.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Origin::ALL
            .into_iter()
            .find(|o| o.as_str() == s || o.label() == s)
            .ok_or_else(|| UnknownOrigin(s.to_string()))
    }
}

/// A set of origins stored as a bitmask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct OriginSet(u8);

impl OriginSet {
    pub const EMPTY: OriginSet = OriginSet(0);

    pub fn new() -> Self {
        Self::EMPTY
    }

    pub fn single(origin: Origin) -> Self {
        OriginSet(origin.bit())
    }

    pub fn insert(&mut self, origin: Origin) -> bool {
        let fresh = !self.contains(origin);
        self.0 |= origin.bit();
        fresh
    }

    pub fn remove(&mut self, origin: Origin) {
        self.0 &= !origin.bit();
    }

    pub fn contains(self, origin: Origin) -> bool {
        self.0 & origin.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_superset(self, other: OriginSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn intersects(self, other: OriginSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn intersection(self, other: OriginSet) -> OriginSet {
        OriginSet(self.0 & other.0)
    }

    /// Members in canonical enumeration order.
    pub fn iter(self) -> impl Iterator<Item = Origin> {
        Origin::ALL.into_iter().filter(move |o| self.contains(*o))
    }
}

impl FromIterator<Origin> for OriginSet {
    fn from_iter<I: IntoIterator<Item = Origin>>(iter: I) -> Self {
        let mut set = OriginSet::EMPTY;
        for o in iter {
            set.insert(o);
        }
        set
    }
}

impl<const N: usize> From<[Origin; N]> for OriginSet {
    fn from(origins: [Origin; N]) -> Self {
        origins.into_iter().collect()
    }
}

impl fmt::Display for OriginSet {
    /// Comma-joined lowercase names, e.g. `remote,service`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for o in self.iter() {
            if !first {
                f.write_str(",")?;
            }
            f.write_str(o.as_str())?;
            first = false;
        }
        Ok(())
    }
}

impl Serialize for OriginSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for OriginSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let origins = Vec::<Origin>::deserialize(deserializer)?;
        Ok(origins.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for o in Origin::ALL {
            assert_eq!(o.as_str().parse::<Origin>().unwrap(), o);
            assert_eq!(o.label().parse::<Origin>().unwrap(), o);
        }
        assert!("root".parse::<Origin>().is_err());
    }

    #[test]
    fn set_lists_in_enumeration_order() {
        let set = OriginSet::from([Origin::Service, Origin::Remote, Origin::Physical]);
        assert_eq!(set.to_string(), "physical,remote,service");
        assert_eq!(set.len(), 3);
        assert!(set.is_superset(OriginSet::single(Origin::Remote)));
        assert!(!set.contains(Origin::Unknown));
    }
}
