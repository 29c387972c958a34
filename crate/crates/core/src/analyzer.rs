//! Static analysis of policies: shadowed rules, exceptions that can never
//! apply, order-dependent rule pairs, unregistered interfaces, and a
//! "which origin can reach what" matrix.
//!
//! Analysis is structural: a rule naming `unknown` is treated as matchable
//! even when the policy leaves `enforce-unknown` off.

use std::fmt;
use std::fmt::Write as _;

use crate::mediation::{CanonicalPath, InterfaceId};
use crate::origin::Origin;
use crate::policy::{AccessMode, AccessRequest, Action, Policy, PolicyRule, RuleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FindingKind {
    Shadowed,
    IneffectiveException,
    OrderConflict,
    UnknownInterface,
}

impl FindingKind {
    pub const fn code(self) -> &'static str {
        match self {
            FindingKind::Shadowed => "W001",
            FindingKind::IneffectiveException => "W002",
            FindingKind::OrderConflict => "W003",
            FindingKind::UnknownInterface => "W004",
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            FindingKind::Shadowed => "shadowed",
            FindingKind::IneffectiveException => "ineffective-exception",
            FindingKind::OrderConflict => "order-conflict",
            FindingKind::UnknownInterface => "unknown-interface",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Finding {
    pub rule_index: usize,
    pub kind: FindingKind,
    pub related_index: Option<usize>,
    pub message: String,
}

impl Finding {
    /// True for findings saying the rule can never be the first match.
    pub fn is_dead_rule(&self) -> bool {
        matches!(self.kind, FindingKind::Shadowed | FindingKind::IneffectiveException)
    }

    /// `W<code> line <n>: <message>`.
    pub fn render(&self, line: usize) -> String {
        format!("{} line {}: {}", self.kind.code(), line, self.message)
    }
}

/// Renders findings one per line; `line_of` maps a rule index to its source line.
pub fn render_findings(findings: &[Finding], line_of: impl Fn(usize) -> usize) -> String {
    let mut out = String::new();
    for f in findings {
        out.push_str(&f.render(line_of(f.rule_index)));
        out.push('\n');
    }
    out
}

/// Does `earlier` prefix-cover `later`'s object (same plane, pattern covers)?
fn covers_object(earlier: &RuleKind, later: &RuleKind) -> bool {
    match (earlier, later) {
        (RuleKind::PathPrefix { prefix: a, .. }, RuleKind::PathPrefix { prefix: b, .. }) => a.is_prefix_of(b),
        (RuleKind::Interface { name: a }, RuleKind::Interface { name: b }) => a == b,
        _ => false,
    }
}

fn objects_overlap(a: &RuleKind, b: &RuleKind) -> bool {
    covers_object(a, b) || covers_object(b, a)
}

/// Request modes a rule applies to. Interface rules carry no mode and are
/// represented by a single `Read` cell.
fn rule_modes(rule: &PolicyRule) -> Vec<AccessMode> {
    match &rule.kind {
        RuleKind::PathPrefix { mode, .. } => mode.modes().collect(),
        RuleKind::Interface { .. } => vec![AccessMode::Read],
    }
}

fn rule_covers_mode(rule: &PolicyRule, m: AccessMode) -> bool {
    match &rule.kind {
        RuleKind::PathPrefix { mode, .. } => mode.covers(m),
        RuleKind::Interface { .. } => true,
    }
}

fn modes_intersect(a: &PolicyRule, b: &PolicyRule) -> bool {
    rule_modes(a).into_iter().any(|m| rule_covers_mode(b, m))
}

/// For each (origin, mode) cell of rule `j`, the earliest earlier rule that
/// decides requests at `j`'s own pattern. `None` if some cell is undecided,
/// i.e. `j` is the first match for at least one request.
fn deciders(policy: &Policy, j: usize) -> Option<Vec<usize>> {
    let rule = &policy.rules[j];
    let mut out = Vec::new();
    for o in rule.origins.iter() {
        for m in rule_modes(rule) {
            let first = policy.rules[..j].iter().position(|i| {
                i.origins.contains(o) && rule_covers_mode(i, m) && covers_object(&i.kind, &rule.kind)
            })?;
            out.push(first);
        }
    }
    out.sort_unstable();
    out.dedup();
    Some(out)
}

fn list_indices(indices: &[usize]) -> String {
    let words: Vec<String> = indices.iter().map(|i| i.to_string()).collect();
    if indices.len() == 1 {
        format!("rule {}", words[0])
    } else {
        format!("rules {}", words.join(", "))
    }
}

/// Rules that can never be the first match.
///
/// A rule is shadowed when, for every origin and access mode it names, some
/// earlier rule of the same plane with a covering pattern also matches. When
/// any of those earlier rules has the opposite action the rule is reported
/// as an ineffective exception, otherwise as a plain (redundant) shadow.
pub fn find_shadowed(policy: &Policy) -> Vec<Finding> {
    let mut findings = Vec::new();
    for (j, rule) in policy.rules.iter().enumerate() {
        let Some(by) = deciders(policy, j) else { continue };
        let opposing: Vec<usize> = by.iter().copied().filter(|&i| policy.rules[i].action != rule.action).collect();
        let finding = if let Some(&first) = opposing.first() {
            Finding {
                rule_index: j,
                kind: FindingKind::IneffectiveException,
                related_index: Some(first),
                message: format!(
                    "`{rule}` never takes effect: {} `{}` matches first; place the exception before it",
                    list_indices(&opposing),
                    policy.rules[first]
                ),
            }
        } else {
            Finding {
                rule_index: j,
                kind: FindingKind::Shadowed,
                related_index: Some(by[0]),
                message: format!("`{rule}` is shadowed by {}", list_indices(&by)),
            }
        };
        findings.push(finding);
    }
    findings
}

/// Pairs `(i, j)`, `i < j`, whose relative order matters: same plane,
/// overlapping patterns, a shared origin and access mode, and different
/// actions. Reported on the later rule with `related_index = i`.
pub fn check_order_conflicts(policy: &Policy) -> Vec<Finding> {
    let mut findings = Vec::new();
    for (j, later) in policy.rules.iter().enumerate() {
        for (i, earlier) in policy.rules[..j].iter().enumerate() {
            if earlier.action != later.action
                && earlier.origins.intersects(later.origins)
                && objects_overlap(&earlier.kind, &later.kind)
                && modes_intersect(earlier, later)
            {
                findings.push(Finding {
                    rule_index: j,
                    kind: FindingKind::OrderConflict,
                    related_index: Some(i),
                    message: format!(
                        "`{later}` and rule {i} `{earlier}` overlap for {} with different actions; outcome depends on order",
                        earlier.origins.intersection(later.origins)
                    ),
                });
            }
        }
    }
    findings
}

/// True for an order conflict laid out as intended: the earlier rule is a
/// strictly narrower path exception in front of a broader rule.
pub fn is_exception_first(policy: &Policy, finding: &Finding) -> bool {
    let Some(i) = finding.related_index else { return false };
    match (&policy.rules[i].kind, &policy.rules[finding.rule_index].kind) {
        (RuleKind::PathPrefix { prefix: narrow, .. }, RuleKind::PathPrefix { prefix: broad, .. }) => {
            broad.is_prefix_of(narrow) && broad != narrow
        }
        _ => false,
    }
}

/// Interface rules naming interfaces outside the seeded registry.
pub fn find_unknown_interfaces(policy: &Policy) -> Vec<Finding> {
    policy
        .rules
        .iter()
        .enumerate()
        .filter_map(|(j, rule)| match &rule.kind {
            RuleKind::Interface { name } if !name.is_seeded() => Some(Finding {
                rule_index: j,
                kind: FindingKind::UnknownInterface,
                related_index: None,
                message: format!("interface `{name}` is not a registered interface"),
            }),
            _ => None,
        })
        .collect()
}

/// Lint findings, sorted by rule index then kind.
///
/// Order conflicts are kept only when they indicate a problem: correctly
/// placed exceptions are dropped, as are conflicts on rules that are
/// already reported dead.
pub fn analyze(policy: &Policy) -> Vec<Finding> {
    let mut findings = find_shadowed(policy);
    let dead: Vec<usize> = findings.iter().map(|f| f.rule_index).collect();
    findings.extend(
        check_order_conflicts(policy)
            .into_iter()
            .filter(|f| !dead.contains(&f.rule_index) && !is_exception_first(policy, f)),
    );
    findings.extend(find_unknown_interfaces(policy));
    findings.sort();
    findings
}

/// A reachability probe.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Probe {
    File { path: CanonicalPath, mode: AccessMode },
    Interface(InterfaceId),
}

impl Probe {
    pub fn read(path: CanonicalPath) -> Self {
        Probe::File { path, mode: AccessMode::Read }
    }

    pub fn request(&self, origin: Origin) -> AccessRequest {
        match self {
            Probe::File { path, mode } => AccessRequest::file(origin, path.clone(), *mode),
            Probe::Interface(name) => AccessRequest::interface(origin, name.clone()),
        }
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Probe::File { path, mode } => write!(f, "{mode} {path}"),
            Probe::Interface(name) => write!(f, "iface {name}"),
        }
    }
}

/// Probe × origin outcome table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reachability {
    pub origins: Vec<Origin>,
    pub probes: Vec<Probe>,
    /// `cells[p][o]` for probe `p` and origin `o`.
    pub cells: Vec<Vec<Action>>,
}

impl Reachability {
    pub fn get(&self, probe: usize, origin: Origin) -> Option<Action> {
        let o = self.origins.iter().position(|x| *x == origin)?;
        self.cells.get(probe).map(|row| row[o])
    }
}

/// Evaluates every probe for every origin.
pub fn reachability(policy: &Policy, origins: &[Origin], probes: &[Probe]) -> Reachability {
    let cells = probes
        .iter()
        .map(|p| origins.iter().map(|&o| policy.evaluate(&p.request(o)).action).collect())
        .collect();
    Reachability { origins: origins.to_vec(), probes: probes.to_vec(), cells }
}

impl fmt::Display for Reachability {
    /// Aligned text matrix, one row per probe.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.probes.iter().map(|p| p.to_string()).collect();
        let first = labels.iter().map(String::len).chain(["probe".len()]).max().unwrap_or(0);
        let widths: Vec<usize> = self.origins.iter().map(|o| o.as_str().len().max(5)).collect();

        let mut line = format!("{:<first$}", "probe");
        for (o, w) in self.origins.iter().zip(&widths) {
            let _ = write!(line, "  {:<w$}", o.as_str());
        }
        writeln!(f, "{}", line.trim_end())?;
        for (label, row) in labels.iter().zip(&self.cells) {
            let mut line = format!("{label:<first$}");
            for (a, w) in row.iter().zip(&widths) {
                let _ = write!(line, "  {:<w$}", a.as_str());
            }
            writeln!(f, "{}", line.trim_end())?;
        }
        Ok(())
    }
}
