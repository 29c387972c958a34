//! `oamacctl` commands over a persisted engine state.
//!
//! State lives in one JSON file under a config directory, guarded by an
//! advisory lock so concurrent invocations serialize. The canonical policy
//! text is mirrored to `<dir>/policy` for inspection.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 lint findings or failed
//! assertions.

use std::fs::{self, File, OpenOptions};
use std::io;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analyzer::{analyze, render_findings};
use crate::dsl::{format_policy, parse_policy, parse_rule, PolicyDocument};
use crate::mediation::Engine;
use crate::origin::Origin;
use crate::policy::{AuditCounters, CounterKey, Policy, PolicyStore};
use crate::scenario::{parse_script, run_script, RunOptions};

/// Environment variable overriding the config directory.
pub const CONFIG_DIR_ENV: &str = "OAMAC_CONFIG_DIR";
pub const DEFAULT_CONFIG_DIR: &str = "./oamac-state";
const STATE_FILE: &str = "state.json";
const POLICY_FILE: &str = "policy";
const LOCK_FILE: &str = ".lock";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FINDINGS: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "oamacctl", about = "Inspect and configure an origin-aware MAC engine", version)]
pub struct Cli {
    /// Directory holding the persisted engine state.
    #[arg(long, env = CONFIG_DIR_ENV, default_value = DEFAULT_CONFIG_DIR, global = true)]
    pub config_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Parse a policy file and install it as the next version.
    Load { file: PathBuf },
    /// Print the active policy in canonical form.
    Show {
        /// Prefix each rule with its index.
        #[arg(long)]
        numbered: bool,
    },
    /// Append a rule, e.g. `add iface bpf-prog-load deny service`.
    Add {
        #[arg(required = true, num_args = 1.., allow_hyphen_values = true)]
        rule: Vec<String>,
    },
    /// Remove the rule at an index.
    Del { index: usize },
    /// Print the audit counter table.
    Counters,
    /// Lint a policy file.
    Analyze { file: PathBuf },
    /// Replay a scenario script.
    Run {
        scenario: PathBuf,
        /// Run against the persisted state and keep its counter and policy changes.
        #[arg(long)]
        live: bool,
        /// Origin of the operator session performing unattributed rule edits.
        #[arg(long = "as", default_value = "physical")]
        as_origin: Origin,
    },
    /// Clear counters and install the empty policy.
    Reset,
}

/// Result of one command.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Output {
    fn ok(stdout: impl Into<String>) -> Self {
        Self { code: EXIT_OK, stdout: stdout.into(), stderr: String::new() }
    }

    fn fail(code: i32, stderr: impl Into<String>) -> Self {
        let mut stderr = stderr.into();
        if !stderr.ends_with('\n') {
            stderr.push('\n');
        }
        Self { code, stdout: String::new(), stderr }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct State {
    version: u64,
    policy: String,
    counters: Vec<(CounterKey, u64)>,
}

impl State {
    fn from_engine(engine: &Engine) -> Self {
        let snap = engine.store.snapshot();
        Self {
            version: snap.version(),
            policy: format_policy(&PolicyDocument::from_policy(snap.policy())),
            counters: engine.counters.snapshot(),
        }
    }

    fn into_engine(self) -> Result<Engine, String> {
        let mut policy = parse_policy(&self.policy).map_err(|e| format!("corrupt state policy: {e}"))?.to_policy();
        policy.set_version(self.version);
        let store = PolicyStore::restore(policy).map_err(|e| format!("corrupt state policy: {e}"))?;
        Ok(Engine::with_parts(store, AuditCounters::from_snapshot(self.counters)))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> Output
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => Ctl::new(cli.config_dir).execute(&cli.command),
        Err(e) => {
            let text = e.render().to_string();
            match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => Output::ok(text),
                _ => Output::fail(EXIT_USAGE, text),
            }
        }
    }
}

/// Command runner bound to one config directory.
#[derive(Debug, Clone)]
pub struct Ctl {
    dir: PathBuf,
}

struct Locked<'a> {
    ctl: &'a Ctl,
    _lock: File,
}

impl Ctl {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn config_dir(&self) -> &Path {
        &self.dir
    }

    pub fn execute(&self, command: &Command) -> Output {
        match self.dispatch(command) {
            Ok(out) => out,
            Err(e) => Output::fail(EXIT_USAGE, format!("oamacctl: {e}")),
        }
    }

    fn dispatch(&self, command: &Command) -> io::Result<Output> {
        Ok(match command {
            Command::Load { file } => self.load(file)?,
            Command::Show { numbered } => self.show(*numbered)?,
            Command::Add { rule } => self.add(&rule.join(" "))?,
            Command::Del { index } => self.del(*index)?,
            Command::Counters => self.counters()?,
            Command::Analyze { file } => analyze_file(file)?,
            Command::Run { scenario, live, as_origin } => self.run(scenario, *live, *as_origin)?,
            Command::Reset => self.reset()?,
        })
    }

    fn lock(&self, exclusive: bool) -> io::Result<Locked<'_>> {
        fs::create_dir_all(&self.dir)?;
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(self.dir.join(LOCK_FILE))?;
        if exclusive {
            file.lock()?;
        } else {
            file.lock_shared()?;
        }
        Ok(Locked { ctl: self, _lock: file })
    }

    pub fn load(&self, file: &Path) -> io::Result<Output> {
        let text = fs::read_to_string(file)?;
        let doc = match parse_policy(&text) {
            Ok(doc) => doc,
            Err(e) => return Ok(Output::fail(EXIT_USAGE, prefix_lines(&file.display().to_string(), &e.to_string()))),
        };
        let n = doc.rules.len();
        self.edit(|engine| engine.store.install(doc.to_policy()).map(|v| format!("loaded {n} rules, version {v}\n")))
    }

    pub fn show(&self, numbered: bool) -> io::Result<Output> {
        let guard = self.lock(false)?;
        let engine = match guard.read()? {
            Ok(e) => e,
            Err(msg) => return Ok(Output::fail(EXIT_USAGE, msg)),
        };
        let snap = engine.store.snapshot();
        let doc = PolicyDocument::from_policy(snap.policy());
        if !numbered {
            return Ok(Output::ok(format_policy(&doc)));
        }
        let mut out = format!("# version {}\n", snap.version());
        if doc.enforce_unknown {
            out.push_str("enforce-unknown on\n");
        }
        for (i, r) in doc.rules.iter().enumerate() {
            out.push_str(&format!("{i:>3}  {r}\n"));
        }
        Ok(Output::ok(out))
    }

    pub fn add(&self, rule_text: &str) -> io::Result<Output> {
        let rule = match parse_rule(rule_text) {
            Ok(r) => r,
            Err(e) => return Ok(Output::fail(EXIT_USAGE, format!("invalid rule: {e}"))),
        };
        self.edit(|engine| engine.store.append_rule(rule).map(|v| format!("version {v}\n")))
    }

    pub fn del(&self, index: usize) -> io::Result<Output> {
        self.edit(|engine| engine.store.remove_rule(index).map(|v| format!("version {v}\n")))
    }

    pub fn counters(&self) -> io::Result<Output> {
        let guard = self.lock(false)?;
        Ok(match guard.read()? {
            Ok(engine) => Output::ok(engine.counters.render()),
            Err(msg) => Output::fail(EXIT_USAGE, msg),
        })
    }

    pub fn reset(&self) -> io::Result<Output> {
        let guard = self.lock(true)?;
        guard.write(&Engine::new())?;
        Ok(Output::ok("reset to empty policy, version 0\n"))
    }

    /// Replays a script. Isolated runs copy the persisted policy into a
    /// throwaway engine; live runs persist counters and policy edits.
    pub fn run(&self, scenario: &Path, live: bool, operator: Origin) -> io::Result<Output> {
        let text = fs::read_to_string(scenario)?;
        let name = scenario.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned());
        let script = match parse_script(&name, &text) {
            Ok(s) => s,
            Err(e) => return Ok(Output::fail(EXIT_USAGE, format!("{}: {e}", scenario.display()))),
        };
        let opts = RunOptions { operator, base_dir: scenario.parent().map(Path::to_path_buf) };
        let guard = self.lock(live)?;
        let engine = match guard.read()? {
            Ok(e) if live => e,
            Ok(e) => Engine::with_parts(PolicyStore::restore(e.store.snapshot().policy().clone()).expect("valid"), AuditCounters::new()),
            Err(msg) => return Ok(Output::fail(EXIT_USAGE, msg)),
        };
        let result = run_script(&script, &engine, &opts);
        if live {
            guard.write(&engine)?;
        }
        Ok(match result {
            Ok(t) => Output {
                code: if t.passed() { EXIT_OK } else { EXIT_FINDINGS },
                stdout: t.to_string(),
                stderr: String::new(),
            },
            Err(e) => Output {
                code: EXIT_USAGE,
                stdout: e.transcript.to_string(),
                stderr: format!("{}: line {}: {}\n", scenario.display(), e.line, e.message),
            },
        })
    }

    fn edit(&self, f: impl FnOnce(&Engine) -> Result<String, crate::policy::PolicyError>) -> io::Result<Output> {
        let guard = self.lock(true)?;
        let engine = match guard.read()? {
            Ok(e) => e,
            Err(msg) => return Ok(Output::fail(EXIT_USAGE, msg)),
        };
        match f(&engine) {
            Ok(msg) => {
                guard.write(&engine)?;
                Ok(Output::ok(msg))
            }
            Err(e) => Ok(Output::fail(EXIT_USAGE, format!("oamacctl: {e}"))),
        }
    }

    /// Loads the persisted engine; a missing state file is the empty engine.
    pub fn engine(&self) -> io::Result<Result<Engine, String>> {
        self.lock(false)?.read()
    }
}

impl Locked<'_> {
    fn read(&self) -> io::Result<Result<Engine, String>> {
        let path = self.ctl.dir.join(STATE_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Ok(Engine::new())),
            Err(e) => return Err(e),
        };
        Ok(serde_json::from_str::<State>(&text)
            .map_err(|e| format!("corrupt state file {}: {e}", path.display()))
            .and_then(State::into_engine))
    }

    fn write(&self, engine: &Engine) -> io::Result<()> {
        let state = State::from_engine(engine);
        let json = serde_json::to_string_pretty(&state).map_err(io::Error::other)?;
        let tmp = self.ctl.dir.join(format!("{STATE_FILE}.tmp"));
        fs::write(&tmp, json + "\n")?;
        fs::rename(&tmp, self.ctl.dir.join(STATE_FILE))?;
        fs::write(self.ctl.dir.join(POLICY_FILE), &state.policy)
    }
}

fn prefix_lines(prefix: &str, text: &str) -> String {
    text.lines().map(|l| format!("{prefix}: {l}\n")).collect()
}

/// Lints a policy file without touching any state.
pub fn analyze_file(file: &Path) -> io::Result<Output> {
    let text = fs::read_to_string(file)?;
    let doc = match parse_policy(&text) {
        Ok(doc) => doc,
        Err(e) => return Ok(Output::fail(EXIT_USAGE, prefix_lines(&file.display().to_string(), &e.to_string()))),
    };
    Ok(analyze_document(&doc))
}

pub fn analyze_document(doc: &PolicyDocument) -> Output {
    let policy: Policy = doc.to_policy();
    let findings = analyze(&policy);
    if findings.is_empty() {
        return Output::ok(format!("{} rules, no findings\n", policy.rules.len()));
    }
    let mut out = render_findings(&findings, |i| doc.line_of(i));
    out.push_str(&format!("{} rules, {} findings\n", policy.rules.len(), findings.len()));
    Output { code: EXIT_FINDINGS, stdout: out, stderr: String::new() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::default_policy;

    fn ctl() -> (tempfile::TempDir, Ctl) {
        let dir = tempfile::tempdir().unwrap();
        let ctl = Ctl::new(dir.path().join("state"));
        (dir, ctl)
    }

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn default_text() -> String {
        format_policy(&PolicyDocument::from_policy(&default_policy()))
    }

    #[test]
    fn fresh_state_is_empty() {
        let (_d, ctl) = ctl();
        assert_eq!(ctl.counters().unwrap(), Output::ok(""));
        assert_eq!(ctl.show(false).unwrap(), Output::ok(""));
    }

    #[test]
    fn load_show_round_trip() {
        let (d, ctl) = ctl();
        let f = write(&d, "p", &format!("# baseline\n\n{}", default_text()));
        let out = ctl.load(&f).unwrap();
        assert_eq!(out.code, 0);
        assert_eq!(out.stdout, "loaded 6 rules, version 1\n");
        assert_eq!(ctl.show(false).unwrap().stdout, default_text());
        assert_eq!(fs::read_to_string(ctl.config_dir().join(POLICY_FILE)).unwrap(), default_text());
    }

    #[test]
    fn bad_load_keeps_previous_policy() {
        let (d, ctl) = ctl();
        ctl.load(&write(&d, "p", &default_text())).unwrap();
        let out = ctl.load(&write(&d, "bad", "path /x deny remote\npath y deny remote\n")).unwrap();
        assert_eq!(out.code, 1);
        assert!(out.stderr.contains("line 2"), "{}", out.stderr);
        assert_eq!(ctl.show(false).unwrap().stdout, default_text());
    }

    #[test]
    fn add_and_del_bump_version() {
        let (d, ctl) = ctl();
        ctl.load(&write(&d, "p", &default_text())).unwrap();
        assert_eq!(ctl.del(5).unwrap().stdout, "version 2\n");
        assert_eq!(ctl.add("iface bpf-map-update deny service").unwrap().stdout, "version 3\n");
        assert_eq!(ctl.del(99).unwrap().code, 1);
        assert_eq!(ctl.add("iface bpf-map-update deny bootstrap").unwrap().code, 1);
        let shown = ctl.show(true).unwrap().stdout;
        assert!(shown.starts_with("# version 3\n"), "{shown}");
        assert!(shown.ends_with("  5  iface bpf-map-update deny service\n"), "{shown}");
    }

    #[test]
    fn analyze_exit_codes() {
        let (d, _ctl) = ctl();
        assert_eq!(analyze_file(&write(&d, "ok", &default_text())).unwrap().code, 0);
        let reversed = "path /sys deny remote\npath /sys/kernel/btf allow remote read\n";
        let out = analyze_file(&write(&d, "rev", reversed)).unwrap();
        assert_eq!(out.code, 2);
        assert!(out.stdout.starts_with("W002 line 2:"), "{}", out.stdout);
        assert_eq!(analyze_file(&write(&d, "bad", "nonsense\n")).unwrap().code, 1);
        let out = analyze_file(&write(&d, "if", "iface perf-event-open deny remote\n")).unwrap();
        assert_eq!(out.code, 2);
        assert!(out.stdout.contains("W004"));
    }

    #[test]
    fn isolated_runs_leave_state_alone() {
        let (d, ctl) = ctl();
        ctl.load(&write(&d, "p", &default_text())).unwrap();
        let scn = write(
            &d,
            "s.scn",
            "boot\nready\nsession remote-login tty pts/0 -> sh\nread sh /sys expect deny\nrule del 0\n",
        );
        let out = ctl.run(&scn, false, Origin::Physical).unwrap();
        assert_eq!(out.code, 0, "{}{}", out.stdout, out.stderr);
        assert_eq!(ctl.counters().unwrap().stdout, "");
        assert_eq!(ctl.show(false).unwrap().stdout, default_text());
        let out = ctl.run(&scn, true, Origin::Physical).unwrap();
        assert_eq!(out.code, 0);
        assert!(ctl.counters().unwrap().stdout.contains("file remote deny 1\n"));
        assert_eq!(ctl.engine().unwrap().unwrap().store.version(), 2);
    }

    #[test]
    fn run_errors_and_failures() {
        let (d, ctl) = ctl();
        let out = ctl.run(&write(&d, "a.scn", "boot\nready\nread ghost /x\n"), false, Origin::Physical).unwrap();
        assert_eq!(out.code, 1);
        assert!(out.stderr.contains("line 3"), "{}", out.stderr);
        let out = ctl.run(&write(&d, "b.scn", "boot\nwat\n"), false, Origin::Physical).unwrap();
        assert_eq!(out.code, 1);
        let out = ctl
            .run(&write(&d, "c.scn", "boot\nready\nsession console-login tty tty1 -> a\nread a /x expect deny\n"), false, Origin::Physical)
            .unwrap();
        assert_eq!(out.code, 2);
    }

    #[test]
    fn reset_clears_everything() {
        let (d, ctl) = ctl();
        ctl.load(&write(&d, "p", &default_text())).unwrap();
        ctl.reset().unwrap();
        assert_eq!(ctl.show(false).unwrap().stdout, "");
        assert_eq!(ctl.engine().unwrap().unwrap().store.version(), 0);
    }

    #[test]
    fn cli_usage_errors_exit_one() {
        assert_eq!(main_with_args(["oamacctl"]).code, 1);
        assert_eq!(main_with_args(["oamacctl", "del", "x"]).code, 1);
        assert_eq!(main_with_args(["oamacctl", "--help"]).code, 0);
        let d = tempfile::tempdir().unwrap();
        let out = main_with_args(["oamacctl", "--config-dir", d.path().to_str().unwrap(), "counters"]);
        assert_eq!(out, Output::ok(""));
    }
}
