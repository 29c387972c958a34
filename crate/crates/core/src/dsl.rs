//! Parser and formatter for the line-oriented policy language.
//!
//! ```text
//! # comment
//! enforce-unknown on|off
//! path <abs-path> allow|deny <origin>[,<origin>...] [read|write]
//! iface <name> allow|deny <origin>[,<origin>...]
//! ```
//!
//! Origins are `physical`, `remote`, `service`, `control-plane` and
//! `unknown`. Paths are normalized while parsing. Comments, the mode token,
//! comma-joined origin lists and the `enforce-unknown` directive are
//! extensions over the bare `path /sys deny remote` rule form.

use std::fmt;

use crate::mediation::{normalize_path, InterfaceId, PathError};
use crate::origin::{Origin, OriginSet};
use crate::policy::{Action, Policy, PolicyRule, RuleKind, RuleMode};

/// Parsed policy file: rules in source order plus directives.
#[derive(Debug, Clone, Default, Eq)]
pub struct PolicyDocument {
    pub rules: Vec<PolicyRule>,
    pub enforce_unknown: bool,
    /// 1-based source line of each rule. Diagnostics only; ignored by `==`.
    pub lines: Vec<usize>,
}

impl PartialEq for PolicyDocument {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules && self.enforce_unknown == other.enforce_unknown
    }
}

impl PolicyDocument {
    pub fn from_policy(policy: &Policy) -> Self {
        Self {
            rules: policy.rules.clone(),
            enforce_unknown: policy.enforce_unknown,
            lines: (1..=policy.rules.len()).collect(),
        }
    }

    pub fn to_policy(&self) -> Policy {
        Policy::new(self.rules.clone()).with_enforce_unknown(self.enforce_unknown)
    }

    /// Source line of rule `index`, falling back to `index + 1`.
    pub fn line_of(&self, index: usize) -> usize {
        self.lines.get(index).copied().unwrap_or(index + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("unknown keyword `{0}`")]
    UnknownKeyword(String),
    #[error("relative path `{0}`")]
    RelativePath(String),
    #[error("missing {0}")]
    Missing(&'static str),
    #[error("expected `allow` or `deny`, found `{0}`")]
    ExpectedAction(String),
    #[error("empty origin list")]
    EmptyOriginList,
    #[error("origin `bootstrap` is exempt from enforcement and cannot appear in a rule")]
    BootstrapOrigin,
    #[error("unknown origin `{0}`")]
    UnknownOrigin(String),
    #[error("invalid interface name `{0}`")]
    InvalidInterface(String),
    #[error("access mode `{0}` is only valid on path rules")]
    ModeOnInterface(String),
    #[error("unexpected token `{0}`")]
    UnexpectedToken(String),
    #[error("expected `on` or `off` after `enforce-unknown`")]
    InvalidDirective,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

/// All errors found in a document, with whatever parsed cleanly.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseErrors {
    pub errors: Vec<ParseError>,
    pub partial: PolicyDocument,
}

impl fmt::Display for ParseErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.errors.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

enum Statement {
    Rule(PolicyRule),
    EnforceUnknown(bool),
}

/// Parses a policy document. Errors are collected per line rather than
/// stopping at the first one.
pub fn parse_policy(text: &str) -> Result<PolicyDocument, ParseErrors> {
    let mut doc = PolicyDocument::default();
    let mut errors = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        match parse_line(raw) {
            Ok(None) => {}
            Ok(Some(Statement::Rule(rule))) => {
                doc.rules.push(rule);
                doc.lines.push(line);
            }
            Ok(Some(Statement::EnforceUnknown(on))) => doc.enforce_unknown = on,
            Err(kind) => errors.push(ParseError { line, kind }),
        }
    }
    if errors.is_empty() {
        Ok(doc)
    } else {
        Err(ParseErrors { errors, partial: doc })
    }
}

/// Parses a single rule, e.g. the argument of `oamacctl add`.
pub fn parse_rule(text: &str) -> Result<PolicyRule, ParseErrorKind> {
    let tokens: Vec<&str> = strip_comment(text).split_whitespace().collect();
    match tokens.first() {
        Some(&"path") | Some(&"iface") => parse_rule_tokens(&tokens),
        Some(other) => Err(ParseErrorKind::UnknownKeyword(other.to_string())),
        None => Err(ParseErrorKind::Missing("rule")),
    }
}

/// Canonical rendering: optional directive line, then one rule per line.
pub fn format_policy(doc: &PolicyDocument) -> String {
    let mut out = String::new();
    if doc.enforce_unknown {
        out.push_str("enforce-unknown on\n");
    }
    for rule in &doc.rules {
        out.push_str(&rule.to_string());
        out.push('\n');
    }
    out
}

fn strip_comment(raw: &str) -> &str {
    match raw.find('#') {
        Some(i) => &raw[..i],
        None => raw,
    }
}

fn parse_line(raw: &str) -> Result<Option<Statement>, ParseErrorKind> {
    let tokens: Vec<&str> = strip_comment(raw).split_whitespace().collect();
    match tokens.as_slice() {
        [] => Ok(None),
        ["enforce-unknown", rest @ ..] => match rest {
            ["on"] => Ok(Some(Statement::EnforceUnknown(true))),
            ["off"] => Ok(Some(Statement::EnforceUnknown(false))),
            _ => Err(ParseErrorKind::InvalidDirective),
        },
        ["path", ..] | ["iface", ..] => parse_rule_tokens(&tokens).map(|r| Some(Statement::Rule(r))),
        [other, ..] => Err(ParseErrorKind::UnknownKeyword(other.to_string())),
    }
}

fn parse_rule_tokens(tokens: &[&str]) -> Result<PolicyRule, ParseErrorKind> {
    let (keyword, rest) = tokens.split_first().ok_or(ParseErrorKind::Missing("rule"))?;
    let (object, rest) = rest
        .split_first()
        .ok_or(if *keyword == "path" { ParseErrorKind::Missing("path") } else { ParseErrorKind::Missing("interface name") })?;
    let (action, rest) = rest.split_first().ok_or(ParseErrorKind::Missing("action"))?;
    let action: Action = action.parse().map_err(|_| ParseErrorKind::ExpectedAction(action.to_string()))?;
    let (origins, rest) = rest.split_first().ok_or(ParseErrorKind::EmptyOriginList)?;
    let origins = parse_origins(origins)?;

    let kind = if *keyword == "path" {
        let prefix = normalize_path(object).map_err(|e| match e {
            PathError::Empty | PathError::Relative(_) => ParseErrorKind::RelativePath(object.to_string()),
        })?;
        let mode = match rest {
            [] => RuleMode::Any,
            ["read"] => RuleMode::Read,
            ["write"] => RuleMode::Write,
            [tok, ..] => return Err(ParseErrorKind::UnexpectedToken(tok.to_string())),
        };
        RuleKind::PathPrefix { prefix, mode }
    } else {
        let name = InterfaceId::new(object).map_err(|_| ParseErrorKind::InvalidInterface(object.to_string()))?;
        match rest {
            [] => {}
            [m @ ("read" | "write"), ..] => return Err(ParseErrorKind::ModeOnInterface(m.to_string())),
            [tok, ..] => return Err(ParseErrorKind::UnexpectedToken(tok.to_string())),
        }
        RuleKind::Interface { name }
    };
    Ok(PolicyRule { kind, action, origins })
}

fn parse_origins(token: &str) -> Result<OriginSet, ParseErrorKind> {
    let mut set = OriginSet::EMPTY;
    for name in token.split(',') {
        if name.is_empty() {
            return Err(ParseErrorKind::EmptyOriginList);
        }
        let origin: Origin = match name {
            "physical" => Origin::Physical,
            "remote" => Origin::Remote,
            "service" => Origin::Service,
            "control-plane" => Origin::ControlPlane,
            "unknown" => Origin::Unknown,
            "bootstrap" => return Err(ParseErrorKind::BootstrapOrigin),
            other => return Err(ParseErrorKind::UnknownOrigin(other.to_string())),
        };
        set.insert(origin);
    }
    Ok(set)
}
