//! Shared generators and reference oracles for the integration suites.
//!
//! The oracles here work on rendered strings rather than the library's
//! component-wise path type, so they stay independent of the code under test.

#![allow(dead_code)]

use std::path::PathBuf;

use oamac::kernel::{Pid, ProcessTable, SessionEntry, SessionKind, TerminalAssociation, ROOT_PID};
use oamac::mediation::{normalize_path, InterfaceId};
use oamac::policy::{AccessMode, AccessRequest, Action, Object, Policy, PolicyRule, Reason, RuleKind, RuleMode};
use oamac::{Origin, OriginSet};
use rand::seq::SliceRandom;
use rand::Rng;

pub const SEGMENTS: [&str; 8] = ["sys", "kernel", "btf", "etc", "oamac", "debug", "home", "fs"];
pub const IFACES: [&str; 4] = ["bpf-prog-load", "bpf-map-create", "bpf-map-update", "perf-event-open"];
pub const SYNTHETIC_CHILD: &str = "zz-probe-child";

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn random_path_text<R: Rng>(rng: &mut R, max_depth: usize) -> String {
    let depth = rng.gen_range(0..=max_depth);
    let mut s = String::new();
    for _ in 0..depth {
        s.push('/');
        s.push_str(SEGMENTS.choose(rng).unwrap());
    }
    if s.is_empty() {
        s.push('/');
    }
    s
}

pub fn random_origins<R: Rng>(rng: &mut R) -> OriginSet {
    loop {
        let set: OriginSet = Origin::RULE_ORIGINS.iter().copied().filter(|_| rng.gen_bool(0.35)).collect();
        if !set.is_empty() {
            return set;
        }
    }
}

pub fn random_action<R: Rng>(rng: &mut R) -> Action {
    if rng.gen_bool(0.5) {
        Action::Allow
    } else {
        Action::Deny
    }
}

pub fn random_rule<R: Rng>(rng: &mut R) -> PolicyRule {
    let origins = random_origins(rng);
    let action = random_action(rng);
    if rng.gen_bool(0.7) {
        let prefix = normalize_path(&random_path_text(rng, 3)).unwrap();
        let mode = *[RuleMode::Any, RuleMode::Any, RuleMode::Read, RuleMode::Write].choose(rng).unwrap();
        PolicyRule::path(prefix, action, origins).with_mode(mode)
    } else {
        PolicyRule::interface(InterfaceId::new(IFACES.choose(rng).unwrap()).unwrap(), action, origins)
    }
}

pub fn random_policy<R: Rng>(rng: &mut R, max_rules: usize) -> Policy {
    let n = rng.gen_range(0..=max_rules);
    Policy::new((0..n).map(|_| random_rule(rng)).collect()).with_enforce_unknown(rng.gen_bool(0.5))
}

pub fn random_request<R: Rng>(rng: &mut R) -> AccessRequest {
    let origin = *Origin::ALL.choose(rng).unwrap();
    if rng.gen_bool(0.7) {
        let mode = *AccessMode::ALL.choose(rng).unwrap();
        AccessRequest::file(origin, normalize_path(&random_path_text(rng, 5)).unwrap(), mode)
    } else {
        AccessRequest::interface(origin, InterfaceId::new(IFACES.choose(rng).unwrap()).unwrap())
    }
}

/// `prefix` covers `path` on whole components.
pub fn oracle_prefix(prefix: &str, path: &str) -> bool {
    prefix == "/" || path == prefix || path.starts_with(&format!("{prefix}/"))
}

pub fn oracle_rule_matches(rule: &PolicyRule, req: &AccessRequest) -> bool {
    if !rule.origins.iter().any(|o| o == req.origin) {
        return false;
    }
    match (&rule.kind, &req.object) {
        (RuleKind::PathPrefix { prefix, mode }, Object::File { path, mode: m }) => {
            let mode_ok = match mode {
                RuleMode::Any => true,
                RuleMode::Read => *m == AccessMode::Read,
                RuleMode::Write => *m == AccessMode::Write,
            };
            mode_ok && oracle_prefix(&prefix.to_string(), &path.to_string())
        }
        (RuleKind::Interface { name }, Object::Interface(i)) => name.as_str() == i.as_str(),
        _ => false,
    }
}

/// Index of the first rule matching the request, ignoring exemptions.
pub fn oracle_first_match(policy: &Policy, req: &AccessRequest) -> Option<usize> {
    policy.rules.iter().position(|r| oracle_rule_matches(r, req))
}

/// Reference decision: (action, matched rule, reason).
pub fn oracle_decide(policy: &Policy, req: &AccessRequest) -> (Action, Option<usize>, Reason) {
    if req.origin == Origin::Bootstrap {
        return (Action::Allow, None, Reason::BootstrapExempt);
    }
    if req.origin == Origin::Unknown && !policy.enforce_unknown {
        return (Action::Allow, None, Reason::UnknownExempt);
    }
    match oracle_first_match(policy, req) {
        Some(i) => (policy.rules[i].action, Some(i), Reason::RuleMatch),
        None => (Action::Allow, None, Reason::DefaultAllow),
    }
}

/// Closed probe universe: every rule pattern plus one synthetic child,
/// crossed with all origins and access modes.
pub fn probe_universe(policy: &Policy) -> Vec<AccessRequest> {
    let mut objects: Vec<Object> = Vec::new();
    for rule in &policy.rules {
        match &rule.kind {
            RuleKind::PathPrefix { prefix, .. } => {
                for path in [prefix.clone(), prefix.join(SYNTHETIC_CHILD).expect("plain segment")] {
                    for mode in AccessMode::ALL {
                        objects.push(Object::File { path: path.clone(), mode });
                    }
                }
            }
            RuleKind::Interface { name } => objects.push(Object::Interface(name.clone())),
        }
    }
    objects.sort_by_key(|o| o.to_string());
    objects.dedup();
    objects
        .into_iter()
        .flat_map(|object| Origin::ALL.into_iter().map(move |origin| AccessRequest { origin, object: object.clone() }))
        .collect()
}

/// Rules that are first match for at least one universe request.
pub fn reachable_rules(policy: &Policy) -> Vec<bool> {
    let mut live = vec![false; policy.rules.len()];
    for req in probe_universe(policy) {
        if let Some(i) = oracle_first_match(policy, &req) {
            live[i] = true;
        }
    }
    live
}

/// Random process-table workload with adversarial terminal claims.
pub struct Workload {
    pub table: ProcessTable,
    /// Session roots created after ready and the origin they were classified as.
    pub sessions: Vec<(Pid, Origin)>,
    pub bootstrap_pids: Vec<Pid>,
}

fn random_terminal<R: Rng>(rng: &mut R, known_ptys: &[String]) -> TerminalAssociation {
    let kinds = [
        SessionKind::ConsoleLogin,
        SessionKind::RemoteLogin,
        SessionKind::ServiceStart,
        SessionKind::ControlPlaneStart,
    ];
    match rng.gen_range(0..5) {
        0 => TerminalAssociation::none(),
        1 => TerminalAssociation::console(format!("tty{}", rng.gen_range(0..4))),
        2 if !known_ptys.is_empty() => TerminalAssociation::pty(known_ptys.choose(rng).unwrap().clone(), None),
        3 => TerminalAssociation::pty(format!("pts/{}", rng.gen_range(0..50)), kinds.choose(rng).copied()),
        _ => TerminalAssociation::pty(format!("pts/x{}", rng.gen_range(0..5)), None),
    }
}

pub fn random_workload<R: Rng>(rng: &mut R, steps: usize) -> Workload {
    let mut table = ProcessTable::boot();
    let mut bootstrap_pids = vec![ROOT_PID];
    for _ in 0..rng.gen_range(0..3) {
        let parent = *bootstrap_pids.choose(rng).unwrap();
        bootstrap_pids.push(table.fork(parent).unwrap());
    }
    table.mark_ready().unwrap();
    let kinds = [
        SessionKind::ConsoleLogin,
        SessionKind::RemoteLogin,
        SessionKind::ServiceStart,
        SessionKind::ControlPlaneStart,
    ];
    let mut sessions = Vec::new();
    let mut ptys: Vec<String> = Vec::new();
    for _ in 0..steps {
        let live: Vec<Pid> = table.processes().filter(|p| p.alive).map(|p| p.pid).collect();
        match rng.gen_range(0..10) {
            0 | 1 => {
                let kind = *kinds.choose(rng).unwrap();
                let terminal = if rng.gen_bool(0.7) {
                    match kind {
                        SessionKind::ConsoleLogin => TerminalAssociation::console("tty1"),
                        SessionKind::RemoteLogin => {
                            let id = format!("pts/{}", rng.gen_range(0..50));
                            ptys.push(id.clone());
                            TerminalAssociation::pty(id, Some(SessionKind::RemoteLogin))
                        }
                        _ => TerminalAssociation::none(),
                    }
                } else {
                    random_terminal(rng, &ptys)
                };
                let pid = table.session_entry(SessionEntry::new(kind, terminal)).unwrap();
                sessions.push((pid, table.origin_of(pid).unwrap()));
            }
            2..=4 => {
                let parent = *live.choose(rng).unwrap();
                table.fork(parent).unwrap();
            }
            5..=8 => {
                let pid = *live.choose(rng).unwrap();
                let terminal = random_terminal(rng, &ptys);
                table.exec(pid, "/bin/sh", terminal).unwrap();
            }
            _ => {
                let pid = *live.choose(rng).unwrap();
                if pid != ROOT_PID {
                    table.exit(pid).unwrap();
                }
            }
        }
    }
    Workload { table, sessions, bootstrap_pids }
}
