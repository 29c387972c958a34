//! Scenario scripts: process-lifecycle events interleaved with mediated
//! accesses, expectations and policy operations, replayed deterministically.
//!
//! ```text
//! policy default                      # or: policy current | policy file <path>
//! policy begin                        # inline policy block
//! path /sys deny remote
//! policy end
//! boot
//! ready
//! session remote-login tty pts/0 -> sh
//! read sh /sys/kernel expect deny     # write <var> <path> / iface <var> <name>
//! expect-origin sh remote
//! rule del 3 [by <var>] [expect allow|deny]
//! rule add iface bpf-prog-load deny service [by <var>] [expect allow|deny]
//! expect-version +2                   # or an absolute version: expect-version 4
//! ```
//!
//! Rule edits are themselves mediated: the editing process must be allowed
//! to write the policy file and to update policy maps. Without `by <var>`
//! the edit runs as an operator session whose origin is chosen by the
//! caller (physical by default).

use std::fmt;
use std::path::{Path, PathBuf};

use crate::dsl::{parse_policy, parse_rule, PolicyDocument};
use crate::event::{Event, EventError, Replayer};
use crate::kernel::{Pid, ProcessTable, SessionEntry, SessionKind, TerminalAssociation, ROOT_PID};
use crate::mediation::{Engine, InterfaceId, MediationError};
use crate::origin::Origin;
use crate::policy::{default_policy, render_table, AccessMode, Action, CounterKey, Decision, PolicyError, PolicyRule};

/// File the policy-edit check treats as the persisted configuration.
pub const POLICY_CONFIG_PATH: &str = "/etc/oamac/policy";
/// Interface the policy-edit check treats as the policy-map update hook.
pub const POLICY_MAP_INTERFACE: &str = "bpf-map-update";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicySource {
    Default,
    Current,
    Inline(PolicyDocument),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccessKind {
    Read(String),
    Write(String),
    Iface(InterfaceId),
}

/// `expect-version N` or `expect-version +N`; the relative form counts
/// bumps since the last `policy` step, or since the run started.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VersionCheck {
    Exact(u64),
    SinceBaseline(u64),
}

impl fmt::Display for VersionCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VersionCheck::Exact(v) => write!(f, "{v}"),
            VersionCheck::SinceBaseline(n) => write!(f, "+{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Event(Event),
    Access { subject: String, access: AccessKind, expect: Option<Action> },
    ExpectOrigin { subject: String, origin: Origin },
    ExpectVersion(VersionCheck),
    Policy(PolicySource),
    RuleAdd { rule: PolicyRule, by: Option<String>, expect: Option<Action> },
    RuleDel { index: usize, by: Option<String>, expect: Option<Action> },
}

fn write_tail(f: &mut fmt::Formatter<'_>, by: &Option<String>, expect: &Option<Action>) -> fmt::Result {
    if let Some(v) = by {
        write!(f, " by {v}")?;
    }
    if let Some(a) = expect {
        write!(f, " expect {a}")?;
    }
    Ok(())
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Event(e) => write!(f, "{e}"),
            Step::Access { subject, access, expect } => {
                match access {
                    AccessKind::Read(p) => write!(f, "read {subject} {p}")?,
                    AccessKind::Write(p) => write!(f, "write {subject} {p}")?,
                    AccessKind::Iface(n) => write!(f, "iface {subject} {n}")?,
                }
                write_tail(f, &None, expect)
            }
            Step::ExpectOrigin { subject, origin } => write!(f, "expect-origin {subject} {origin}"),
            Step::ExpectVersion(v) => write!(f, "expect-version {v}"),
            Step::Policy(PolicySource::Default) => f.write_str("policy default"),
            Step::Policy(PolicySource::Current) => f.write_str("policy current"),
            Step::Policy(PolicySource::File(p)) => write!(f, "policy file {}", p.display()),
            Step::Policy(PolicySource::Inline(doc)) => write!(f, "policy inline ({} rules)", doc.rules.len()),
            Step::RuleAdd { rule, by, expect } => {
                write!(f, "rule add {rule}")?;
                write_tail(f, by, expect)
            }
            Step::RuleDel { index, by, expect } => {
                write!(f, "rule del {index}")?;
                write_tail(f, by, expect)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Script {
    pub name: String,
    /// Steps with their 1-based source line.
    pub steps: Vec<(usize, Step)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

fn script_err(line: usize, message: impl fmt::Display) -> ScriptError {
    ScriptError { line, message: message.to_string() }
}

fn parse_expect(tokens: &[&str]) -> Result<(Option<Action>, usize), String> {
    match tokens {
        [.., "expect", a] => Ok((Some(a.parse()?), tokens.len() - 2)),
        [.., "expect"] => Err("`expect` needs `allow` or `deny`".to_string()),
        _ => Ok((None, tokens.len())),
    }
}

type EditTail<'a> = (&'a [&'a str], Option<String>, Option<Action>);

/// Splits a trailing `[by <var>] [expect allow|deny]` off a token list.
fn parse_edit_tail<'a>(tokens: &'a [&'a str]) -> Result<EditTail<'a>, String> {
    let (expect, end) = parse_expect(tokens)?;
    let tokens = &tokens[..end];
    match tokens {
        [head @ .., "by", var] => Ok((head, Some(var.to_string()), expect)),
        _ => Ok((tokens, None, expect)),
    }
}

fn strip_comment(raw: &str) -> &str {
    raw.find('#').map_or(raw, |i| &raw[..i])
}

/// Parses a whole script. Malformed steps are reported with their line.
pub fn parse_script(name: &str, text: &str) -> Result<Script, ScriptError> {
    let mut steps = Vec::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    while let Some((line, raw)) = lines.next() {
        let tokens: Vec<&str> = strip_comment(raw).split_whitespace().collect();
        let Some(&head) = tokens.first() else { continue };
        let step = if Event::is_event_keyword(head) {
            Step::Event(Event::from_tokens(&tokens).map_err(|e| script_err(line, e))?)
        } else {
            match tokens.as_slice() {
                ["policy", "begin"] => {
                    let mut body = String::new();
                    let start = line;
                    let mut closed = false;
                    for (_, raw) in lines.by_ref() {
                        if strip_comment(raw).split_whitespace().collect::<Vec<_>>() == ["policy", "end"] {
                            closed = true;
                            break;
                        }
                        body.push_str(raw);
                        body.push('\n');
                    }
                    if !closed {
                        return Err(script_err(start, "`policy begin` without `policy end`"));
                    }
                    let doc = parse_policy(&body).map_err(|e| {
                        let first = &e.errors[0];
                        script_err(start + first.line, &first.kind)
                    })?;
                    Step::Policy(PolicySource::Inline(doc))
                }
                ["policy", "default"] => Step::Policy(PolicySource::Default),
                ["policy", "current"] => Step::Policy(PolicySource::Current),
                ["policy", "file", path] => Step::Policy(PolicySource::File(PathBuf::from(path))),
                [kind @ ("read" | "write" | "iface"), rest @ ..] => {
                    let (expect, end) = parse_expect(rest).map_err(|e| script_err(line, e))?;
                    let [subject, object] = rest[..end] else {
                        return Err(script_err(line, format!("expected `{kind} <var> <object> [expect allow|deny]`")));
                    };
                    let access = match *kind {
                        "read" => AccessKind::Read(object.to_string()),
                        "write" => AccessKind::Write(object.to_string()),
                        _ => AccessKind::Iface(InterfaceId::new(object).map_err(|e| script_err(line, e))?),
                    };
                    Step::Access { subject: subject.to_string(), access, expect }
                }
                ["expect-origin", subject, origin] => Step::ExpectOrigin {
                    subject: subject.to_string(),
                    origin: origin.parse().map_err(|e| script_err(line, e))?,
                },
                ["expect-version", v] => {
                    let bad = || script_err(line, format!("invalid version `{v}`"));
                    Step::ExpectVersion(match v.strip_prefix('+') {
                        Some(n) => VersionCheck::SinceBaseline(n.parse().map_err(|_| bad())?),
                        None => VersionCheck::Exact(v.parse().map_err(|_| bad())?),
                    })
                }
                ["rule", "add", rest @ ..] => {
                    let (rule_tokens, by, expect) = parse_edit_tail(rest).map_err(|e| script_err(line, e))?;
                    let rule = parse_rule(&rule_tokens.join(" ")).map_err(|e| script_err(line, e))?;
                    Step::RuleAdd { rule, by, expect }
                }
                ["rule", "del", rest @ ..] => {
                    let (idx_tokens, by, expect) = parse_edit_tail(rest).map_err(|e| script_err(line, e))?;
                    let [idx] = idx_tokens else {
                        return Err(script_err(line, "expected `rule del <index>`"));
                    };
                    let index = idx.parse().map_err(|_| script_err(line, format!("invalid rule index `{idx}`")))?;
                    Step::RuleDel { index, by, expect }
                }
                _ => return Err(script_err(line, format!("unrecognized step `{}`", tokens.join(" ")))),
            }
        };
        steps.push((line, step));
    }
    Ok(Script { name: name.to_string(), steps })
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Origin of the operator session that performs unattributed rule edits.
    pub operator: Origin,
    /// Directory `policy file` paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { operator: Origin::Physical, base_dir: None }
    }
}

/// Outcome of a script run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcript {
    pub name: String,
    pub lines: Vec<String>,
    pub assertions: usize,
    pub failures: usize,
    pub denials: usize,
    pub mediation_calls: u64,
    /// Counter cells incremented by this run.
    pub counters: Vec<(CounterKey, u64)>,
}

impl Transcript {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario: {}", self.name)?;
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        writeln!(
            f,
            "result: {verdict} ({}/{} assertions passed)",
            self.assertions - self.failures,
            self.assertions
        )?;
        writeln!(f, "mediation calls: {} ({} denied)", self.mediation_calls, self.denials)?;
        writeln!(f, "counters:")?;
        for line in render_table(&self.counters).lines() {
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct RunError {
    pub line: usize,
    pub message: String,
    /// Transcript up to the failing step.
    pub transcript: Box<Transcript>,
}

#[derive(Debug, thiserror::Error)]
enum StepError {
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Mediation(#[from] MediationError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{0}")]
    Other(String),
}

struct Run<'a> {
    engine: &'a Engine,
    opts: &'a RunOptions,
    replay: Replayer,
    operator: Option<Pid>,
    baseline: u64,
    out: Transcript,
}

/// Replays `script` against a fresh process table and the given engine.
pub fn run_script(script: &Script, engine: &Engine, opts: &RunOptions) -> Result<Transcript, RunError> {
    let before = engine.counters.snapshot();
    let mut run = Run {
        engine,
        opts,
        replay: Replayer::new(),
        operator: None,
        baseline: engine.store.version(),
        out: Transcript { name: script.name.clone(), ..Transcript::default() },
    };
    let mut failed_at = None;
    for (line, step) in &script.steps {
        match run.step(step) {
            Ok(outcome) => run.out.lines.push(format!("[{line:>3}] {step} : {outcome}")),
            Err(e) => {
                failed_at = Some((*line, e.to_string()));
                break;
            }
        }
    }
    run.out.counters = counter_delta(&before, &engine.counters.snapshot());
    run.out.mediation_calls = run.out.counters.iter().map(|(_, v)| v).sum();
    match failed_at {
        None => Ok(run.out),
        Some((line, message)) => Err(RunError { line, message, transcript: Box::new(run.out) }),
    }
}

fn counter_delta(before: &[(CounterKey, u64)], after: &[(CounterKey, u64)]) -> Vec<(CounterKey, u64)> {
    after
        .iter()
        .filter_map(|(k, v)| {
            let prev = before.iter().find(|(bk, _)| bk == k).map_or(0, |(_, bv)| *bv);
            (*v > prev).then(|| (k.clone(), v - prev))
        })
        .collect()
}

impl Run<'_> {
    fn table(&self) -> Result<&ProcessTable, StepError> {
        self.replay.table().ok_or(StepError::Event(EventError::NotBooted))
    }

    fn check(&mut self, expect: Option<Action>, got: Action) -> String {
        match expect {
            None => String::new(),
            Some(want) => {
                self.out.assertions += 1;
                if want == got {
                    " PASS".to_string()
                } else {
                    self.out.failures += 1;
                    format!(" FAIL (expected {want})")
                }
            }
        }
    }

    fn note(&mut self, d: &Decision) {
        if !d.is_allowed() {
            self.out.denials += 1;
        }
    }

    fn step(&mut self, step: &Step) -> Result<String, StepError> {
        match step {
            Step::Event(event) => {
                let created = self.replay.apply(event)?;
                let table = self.table()?;
                let pid = match (created, event) {
                    (Some(pid), _) => pid,
                    (None, Event::Exec { target, .. } | Event::Exit { target }) => self.replay.resolve(target)?,
                    (None, _) => return Ok(if table.is_ready() { "ready".into() } else { "ok".into() }),
                };
                let rec = table.get(pid).expect("pid from replay exists");
                Ok(if rec.alive { format!("pid {pid} {}", rec.origin.label()) } else { format!("pid {pid} exited") })
            }
            Step::Access { subject, access, expect } => {
                let pid = self.replay.resolve(subject)?;
                let table = self.table()?;
                let decision = match access {
                    AccessKind::Read(p) => self.engine.mediate_file(table, pid, p, AccessMode::Read)?,
                    AccessKind::Write(p) => self.engine.mediate_file(table, pid, p, AccessMode::Write)?,
                    AccessKind::Iface(n) => self.engine.mediate_iface(table, pid, n)?,
                };
                self.note(&decision);
                let version = self.engine.store.version();
                let tail = self.check(*expect, decision.action);
                Ok(format!("{decision} @v{version}{tail}"))
            }
            Step::ExpectOrigin { subject, origin } => {
                let pid = self.replay.resolve(subject)?;
                let actual = self.table()?.origin_of(pid).map_err(EventError::from)?;
                self.out.assertions += 1;
                if actual == *origin {
                    Ok(format!("{} PASS", actual.label()))
                } else {
                    self.out.failures += 1;
                    Ok(format!("{} FAIL", actual.label()))
                }
            }
            Step::ExpectVersion(check) => {
                let v = self.engine.store.version();
                let want = match *check {
                    VersionCheck::Exact(n) => n,
                    VersionCheck::SinceBaseline(n) => self.baseline + n,
                };
                self.out.assertions += 1;
                if v == want {
                    Ok(format!("v{v} PASS"))
                } else {
                    self.out.failures += 1;
                    Ok(format!("v{v} FAIL"))
                }
            }
            Step::Policy(source) => {
                let policy = match source {
                    PolicySource::Current => {
                        let snap = self.engine.store.snapshot();
                        return Ok(format!("version {} ({} rules)", snap.version(), snap.policy().rules.len()));
                    }
                    PolicySource::Default => default_policy(),
                    PolicySource::Inline(doc) => doc.to_policy(),
                    PolicySource::File(p) => load_policy_file(&self.resolve_path(p))?,
                };
                let n = policy.rules.len();
                let v = self.engine.store.install(policy)?;
                self.baseline = v;
                Ok(format!("version {v} ({n} rules)"))
            }
            Step::RuleAdd { rule, by, expect } => {
                let (decision, via) = self.authorize_edit(by.as_deref())?;
                let tail = self.check(*expect, decision.action);
                if !decision.is_allowed() {
                    return Ok(format!("{decision} ({via}){tail}"));
                }
                let v = self.engine.store.append_rule(rule.clone())?;
                Ok(format!("{decision} -> version {v}{tail}"))
            }
            Step::RuleDel { index, by, expect } => {
                let (decision, via) = self.authorize_edit(by.as_deref())?;
                let tail = self.check(*expect, decision.action);
                if !decision.is_allowed() {
                    return Ok(format!("{decision} ({via}){tail}"));
                }
                let v = self.engine.store.remove_rule(*index)?;
                Ok(format!("{decision} -> version {v}{tail}"))
            }
        }
    }

    fn resolve_path(&self, p: &Path) -> PathBuf {
        match &self.opts.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Mediates the two operations a policy edit consists of. Returns the
    /// first denial, or the last allow, plus which operation it came from.
    fn authorize_edit(&mut self, by: Option<&str>) -> Result<(Decision, &'static str), StepError> {
        let pid = match by {
            Some(var) => self.replay.resolve(var)?,
            None => self.operator_pid()?,
        };
        let table = self.table()?;
        let file = self.engine.mediate_file(table, pid, POLICY_CONFIG_PATH, AccessMode::Write)?;
        let iface = InterfaceId::new(POLICY_MAP_INTERFACE).expect("static interface name");
        let map = self.engine.mediate_iface(table, pid, &iface)?;
        self.note(&file);
        self.note(&map);
        Ok(if !file.is_allowed() {
            (file, "write /etc/oamac/policy")
        } else {
            (map, "iface bpf-map-update")
        })
    }

    fn operator_pid(&mut self) -> Result<Pid, StepError> {
        if let Some(pid) = self.operator {
            return Ok(pid);
        }
        let origin = self.opts.operator;
        let table = self
            .replay
            .table_mut()
            .ok_or_else(|| StepError::Other("policy edits need a booted system".into()))?;
        let entry = match origin {
            Origin::Bootstrap => {
                self.operator = Some(ROOT_PID);
                return Ok(ROOT_PID);
            }
            Origin::Physical => SessionEntry::new(SessionKind::ConsoleLogin, TerminalAssociation::console("tty0")),
            Origin::Remote => SessionEntry::new(
                SessionKind::RemoteLogin,
                TerminalAssociation::pty("pts/oamacctl", Some(SessionKind::RemoteLogin)),
            ),
            Origin::Service => SessionEntry::new(SessionKind::ServiceStart, TerminalAssociation::none()),
            Origin::ControlPlane => SessionEntry::new(SessionKind::ControlPlaneStart, TerminalAssociation::none()),
            // A service entry holding a console is malformed and classifies as unknown.
            Origin::Unknown => SessionEntry::new(SessionKind::ServiceStart, TerminalAssociation::console("tty0")),
        };
        let pid = table.session_entry(entry).map_err(EventError::from)?;
        self.operator = Some(pid);
        Ok(pid)
    }
}

fn load_policy_file(path: &Path) -> Result<crate::policy::Policy, StepError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| StepError::Other(format!("cannot read {}: {e}", path.display())))?;
    parse_policy(&text)
        .map(|d| d.to_policy())
        .map_err(|e| StepError::Other(format!("{}: {e}", path.display())))
}
