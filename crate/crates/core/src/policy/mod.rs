//! Ordered first-match policies.
//!
//! A policy is a list of rules scanned top to bottom; the first rule whose
//! object and origin set match a request decides it. Requests matched by no
//! rule are allowed. `Bootstrap` subjects are always allowed, and `Unknown`
//! subjects are allowed unless the policy opts into enforcing them.

mod compiled;
mod counters;
mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use compiled::CompiledPolicy;
pub use counters::{render_table, AuditCounters, CounterKey};
pub use store::{PolicySnapshot, PolicyStore};

use crate::mediation::{normalize_path, CanonicalPath, InterfaceId};
use crate::origin::{Origin, OriginSet};

/// errno returned on every denial (`EPERM`).
pub const EPERM: i32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Allow,
    Deny,
}

impl Action {
    pub const fn as_str(self) -> &'static str {
        match self {
            Action::Allow => "allow",
            Action::Deny => "deny",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "allow" => Ok(Action::Allow),
            "deny" => Ok(Action::Deny),
            _ => Err(format!("expected `allow` or `deny`, found `{s}`")),
        }
    }
}

/// Mode of a file access request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessMode {
    Read,
    Write,
}

impl AccessMode {
    pub const ALL: [AccessMode; 2] = [AccessMode::Read, AccessMode::Write];

    pub const fn as_str(self) -> &'static str {
        match self {
            AccessMode::Read => "read",
            AccessMode::Write => "write",
        }
    }

    pub(crate) const fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for AccessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Access-mode qualifier of a path rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleMode {
    Read,
    Write,
    #[default]
    Any,
}

impl RuleMode {
    pub fn covers(self, mode: AccessMode) -> bool {
        matches!(
            (self, mode),
            (RuleMode::Any, _) | (RuleMode::Read, AccessMode::Read) | (RuleMode::Write, AccessMode::Write)
        )
    }

    /// Access modes this qualifier applies to.
    pub fn modes(self) -> impl Iterator<Item = AccessMode> {
        AccessMode::ALL.into_iter().filter(move |m| self.covers(*m))
    }
}

/// What a rule applies to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    PathPrefix { prefix: CanonicalPath, mode: RuleMode },
    Interface { name: InterfaceId },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolicyRule {
    pub kind: RuleKind,
    pub action: Action,
    pub origins: OriginSet,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("rule has no origins")]
    EmptyOrigins,
    #[error("bootstrap is exempt from enforcement and cannot appear in a rule")]
    BootstrapOrigin,
}

impl PolicyRule {
    /// Path-prefix rule with mode `any`.
    pub fn path(prefix: CanonicalPath, action: Action, origins: impl Into<OriginSet>) -> Self {
        Self { kind: RuleKind::PathPrefix { prefix, mode: RuleMode::Any }, action, origins: origins.into() }
    }

    pub fn interface(name: InterfaceId, action: Action, origins: impl Into<OriginSet>) -> Self {
        Self { kind: RuleKind::Interface { name }, action, origins: origins.into() }
    }

    /// Sets the mode qualifier. No effect on interface rules.
    pub fn with_mode(mut self, new_mode: RuleMode) -> Self {
        if let RuleKind::PathPrefix { mode, .. } = &mut self.kind {
            *mode = new_mode;
        }
        self
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        if self.origins.is_empty() {
            return Err(RuleError::EmptyOrigins);
        }
        if self.origins.contains(Origin::Bootstrap) {
            return Err(RuleError::BootstrapOrigin);
        }
        Ok(())
    }

    /// Object match only, ignoring origins.
    pub fn matches_object(&self, object: &Object) -> bool {
        match (&self.kind, object) {
            (RuleKind::PathPrefix { prefix, mode }, Object::File { path, mode: req }) => {
                mode.covers(*req) && prefix.is_prefix_of(path)
            }
            (RuleKind::Interface { name }, Object::Interface(iface)) => name == iface,
            _ => false,
        }
    }

    pub fn matches(&self, request: &AccessRequest) -> bool {
        self.origins.contains(request.origin) && self.matches_object(&request.object)
    }
}

impl fmt::Display for PolicyRule {
    /// Canonical policy-language line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            RuleKind::PathPrefix { prefix, mode } => {
                write!(f, "path {prefix} {} {}", self.action, self.origins)?;
                match mode {
                    RuleMode::Any => Ok(()),
                    RuleMode::Read => f.write_str(" read"),
                    RuleMode::Write => f.write_str(" write"),
                }
            }
            RuleKind::Interface { name } => write!(f, "iface {name} {} {}", self.action, self.origins),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("rule {index}: {source}")]
    InvalidRule { index: usize, source: RuleError },
    #[error("rule index {index} out of range (policy has {len} rules)")]
    IndexOutOfRange { index: usize, len: usize },
}

/// An ordered rule list plus the `enforce-unknown` switch.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Policy {
    pub rules: Vec<PolicyRule>,
    pub enforce_unknown: bool,
    /// Assigned by [`PolicyStore`] on install; `0` for policies never installed.
    #[serde(default)]
    version: u64,
}

impl Policy {
    pub fn new(rules: Vec<PolicyRule>) -> Self {
        Self { rules, enforce_unknown: false, version: 0 }
    }

    pub fn with_enforce_unknown(mut self, on: bool) -> Self {
        self.enforce_unknown = on;
        self
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn set_version(&mut self, version: u64) {
        self.version = version;
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        for (index, rule) in self.rules.iter().enumerate() {
            rule.validate().map_err(|source| PolicyError::InvalidRule { index, source })?;
        }
        Ok(())
    }

    /// Reference evaluation: a plain linear scan over the rules.
    ///
    /// [`CompiledPolicy`] must agree with this exactly.
    pub fn evaluate(&self, request: &AccessRequest) -> Decision {
        match request.origin {
            Origin::Bootstrap => return Decision::exempt(Reason::BootstrapExempt),
            Origin::Unknown if !self.enforce_unknown => return Decision::exempt(Reason::UnknownExempt),
            _ => {}
        }
        self.rules
            .iter()
            .position(|r| r.matches(request))
            .map(|i| Decision::matched(i, self.rules[i].action))
            .unwrap_or_else(|| Decision::exempt(Reason::DefaultAllow))
    }
}

/// Object of an access request.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Object {
    File { path: CanonicalPath, mode: AccessMode },
    Interface(InterfaceId),
}

impl fmt::Display for Object {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Object::File { path, mode } => write!(f, "{mode} {path}"),
            Object::Interface(name) => write!(f, "iface {name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AccessRequest {
    pub origin: Origin,
    pub object: Object,
}

impl AccessRequest {
    pub fn file(origin: Origin, path: CanonicalPath, mode: AccessMode) -> Self {
        Self { origin, object: Object::File { path, mode } }
    }

    /// Builds a file request from a raw path, normalizing it first.
    pub fn raw_file(origin: Origin, raw: &str, mode: AccessMode) -> Result<Self, crate::mediation::PathError> {
        Ok(Self::file(origin, normalize_path(raw)?, mode))
    }

    pub fn interface(origin: Origin, name: InterfaceId) -> Self {
        Self { origin, object: Object::Interface(name) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    DefaultAllow,
    RuleMatch,
    BootstrapExempt,
    UnknownExempt,
}

impl Reason {
    pub const fn as_str(self) -> &'static str {
        match self {
            Reason::DefaultAllow => "default-allow",
            Reason::RuleMatch => "rule-match",
            Reason::BootstrapExempt => "bootstrap-exempt",
            Reason::UnknownExempt => "unknown-exempt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decision {
    pub action: Action,
    pub matched_rule: Option<usize>,
    pub reason: Reason,
    /// `0` on allow, [`EPERM`] on deny.
    pub errno: i32,
}

impl Decision {
    pub(crate) fn exempt(reason: Reason) -> Self {
        Self { action: Action::Allow, matched_rule: None, reason, errno: 0 }
    }

    pub(crate) fn matched(index: usize, action: Action) -> Self {
        let errno = if action == Action::Deny { EPERM } else { 0 };
        Self { action, matched_rule: Some(index), reason: Reason::RuleMatch, errno }
    }

    pub fn is_allowed(&self) -> bool {
        self.action == Action::Allow
    }
}

impl fmt::Display for Decision {
    /// `ALLOW rule 0`, `DENY(EPERM) rule 1`, `ALLOW default-allow`, ...
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.action {
            Action::Allow => f.write_str("ALLOW")?,
            Action::Deny => f.write_str("DENY(EPERM)")?,
        }
        match self.matched_rule {
            Some(i) => write!(f, " rule {i}"),
            None => write!(f, " {}", self.reason.as_str()),
        }
    }
}

/// The baseline policy: deny high-impact kernel control to non-physical
/// origins while keeping read-only BTF introspection available.
pub fn default_policy() -> Policy {
    use Origin::{Remote, Service};
    let path = |p: &str| normalize_path(p).expect("static path");
    let iface = |n: &str| InterfaceId::new(n).expect("static interface name");
    Policy::new(vec![
        PolicyRule::path(path("/sys/kernel/btf"), Action::Allow, [Remote, Service]).with_mode(RuleMode::Read),
        PolicyRule::path(path("/sys"), Action::Deny, [Remote]),
        PolicyRule::path(path("/etc/oamac"), Action::Deny, [Remote, Service]),
        PolicyRule::interface(iface("bpf-prog-load"), Action::Deny, [Remote, Service]),
        PolicyRule::interface(iface("bpf-map-create"), Action::Deny, [Remote, Service]),
        PolicyRule::interface(iface("bpf-map-update"), Action::Deny, [Remote, Service]),
    ])
}
