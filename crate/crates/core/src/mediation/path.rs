use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("empty path")]
    Empty,
    #[error("relative path `{0}`")]
    Relative(String),
}

/// A rooted path with no empty, `.` or `..` segments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct CanonicalPath {
    components: Vec<String>,
}

impl CanonicalPath {
    pub fn root() -> Self {
        Self::default()
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    pub fn is_root(&self) -> bool {
        self.components.is_empty()
    }

    /// Appends one segment. Returns `None` when `segment` is not a plain name.
    pub fn join(&self, segment: &str) -> Option<CanonicalPath> {
        if segment.is_empty() || segment == "." || segment == ".." || segment.contains('/') {
            return None;
        }
        let mut components = self.components.clone();
        components.push(segment.to_string());
        Some(CanonicalPath { components })
    }

    /// Component-boundary prefix test: `/sys` covers `/sys/kernel` but not `/system`.
    pub fn is_prefix_of(&self, other: &CanonicalPath) -> bool {
        other.components.len() >= self.components.len()
            && self.components.iter().zip(&other.components).all(|(a, b)| a == b)
    }
}

/// Resolves `.`, `..` and repeated separators. `..` at the root stays at the root.
pub fn normalize_path(raw: &str) -> Result<CanonicalPath, PathError> {
    if raw.is_empty() {
        return Err(PathError::Empty);
    }
    if !raw.starts_with('/') {
        return Err(PathError::Relative(raw.to_string()));
    }
    let mut components: Vec<String> = Vec::new();
    for seg in raw.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                components.pop();
            }
            s => components.push(s.to_string()),
        }
    }
    Ok(CanonicalPath { components })
}

/// True iff `pattern`'s components are a prefix of `path`'s components.
pub fn prefix_match(pattern: &CanonicalPath, path: &CanonicalPath) -> bool {
    pattern.is_prefix_of(path)
}

impl FromStr for CanonicalPath {
    type Err = PathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        normalize_path(s)
    }
}

impl fmt::Display for CanonicalPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.components.is_empty() {
            return f.write_str("/");
        }
        for c in &self.components {
            write!(f, "/{c}")?;
        }
        Ok(())
    }
}

impl Serialize for CanonicalPath {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CanonicalPath {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        normalize_path(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> CanonicalPath {
        normalize_path(s).unwrap()
    }

    #[test]
    fn normalizes() {
        assert_eq!(p("/sys//kernel/./debug").to_string(), "/sys/kernel/debug");
        assert_eq!(p("/sys/kernel/../kernel/btf").to_string(), "/sys/kernel/btf");
        assert_eq!(p("/../..").to_string(), "/");
        assert_eq!(p("/a/b/../../../c").to_string(), "/c");
        assert_eq!(p("/etc/oamac/").to_string(), "/etc/oamac");
        assert!(p("/").is_root());
    }

    #[test]
    fn rejects_relative_and_empty() {
        assert_eq!(normalize_path("etc/oamac"), Err(PathError::Relative("etc/oamac".into())));
        assert_eq!(normalize_path("./x"), Err(PathError::Relative("./x".into())));
        assert_eq!(normalize_path(""), Err(PathError::Empty));
    }

    #[test]
    fn prefix_is_component_bounded() {
        assert!(prefix_match(&p("/sys"), &p("/sys/kernel/debug")));
        assert!(!prefix_match(&p("/sys"), &p("/system")));
        assert!(prefix_match(&p("/sys"), &p("/sys")));
        assert!(!prefix_match(&p("/sys/kernel"), &p("/sys")));
        assert!(prefix_match(&p("/"), &p("/anything")));
    }

    #[test]
    fn join_rejects_special_segments() {
        assert_eq!(p("/sys").join("kernel"), Some(p("/sys/kernel")));
        assert_eq!(p("/sys").join(".."), None);
        assert_eq!(p("/sys").join("a/b"), None);
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(segs in proptest::collection::vec(
            prop_oneof![Just("".to_string()), Just(".".to_string()), Just("..".to_string()), "[a-z]{1,4}"],
            0..10,
        )) {
            let raw = format!("/{}", segs.join("/"));
            let once = normalize_path(&raw).unwrap();
            let twice = normalize_path(&once.to_string()).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.to_string().starts_with('/'));
            prop_assert!(once.components().iter().all(|c| !c.is_empty() && c != "." && c != ".."));
        }
    }
}
