//! Line-oriented process-lifecycle event log.
//!
//! ```text
//! boot
//! ready
//! session <kind> [tty <id>] -> <var>
//! fork <var> -> <var>
//! exec <var> <image> [tty <id>|notty]
//! exit <var>
//! ```
//!
//! `<var>` names a pid within one log; `init` is bound to the root task at
//! `boot`. Terminal ids beginning with `pts/` denote pseudo-terminals, any
//! other id is a physical console.

use std::collections::BTreeMap;
use std::fmt;

use crate::kernel::{KernelError, Pid, ProcessTable, SessionEntry, SessionKind, TerminalAssociation, ROOT_PID};

pub const ROOT_VAR: &str = "init";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TerminalClaim {
    Tty(String),
    NoTty,
}

impl fmt::Display for TerminalClaim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminalClaim::Tty(id) => write!(f, "tty {id}"),
            TerminalClaim::NoTty => f.write_str("notty"),
        }
    }
}

fn is_pty(id: &str) -> bool {
    id.starts_with("pts/")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Boot,
    Ready,
    Session { kind: SessionKind, tty: Option<String>, bind: String },
    Fork { parent: String, bind: String },
    Exec { target: String, image: String, terminal: Option<TerminalClaim> },
    Exit { target: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EventError {
    #[error("malformed event: {0}")]
    Syntax(String),
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("variable `{0}` is already bound")]
    Rebound(String),
    #[error("system has not booted")]
    NotBooted,
    #[error("system has already booted")]
    AlreadyBooted,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn syntax(msg: impl Into<String>) -> EventError {
    EventError::Syntax(msg.into())
}

fn parse_var(tok: &str) -> Result<String, EventError> {
    let ok = !tok.is_empty()
        && tok.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.');
    if ok {
        Ok(tok.to_string())
    } else {
        Err(syntax(format!("invalid variable name `{tok}`")))
    }
}

fn parse_terminal(tokens: &[&str]) -> Result<Option<TerminalClaim>, EventError> {
    match tokens {
        [] => Ok(None),
        ["notty"] => Ok(Some(TerminalClaim::NoTty)),
        ["tty", id] => Ok(Some(TerminalClaim::Tty(id.to_string()))),
        _ => Err(syntax(format!("expected `tty <id>` or `notty`, found `{}`", tokens.join(" ")))),
    }
}

impl Event {
    /// Parses one event from already whitespace-split tokens.
    pub fn from_tokens(tokens: &[&str]) -> Result<Event, EventError> {
        match tokens {
            ["boot"] => Ok(Event::Boot),
            ["ready"] => Ok(Event::Ready),
            ["session", kind, rest @ ..] => {
                let kind: SessionKind = kind.parse().map_err(syntax)?;
                let (tty, rest) = match rest {
                    ["tty", id, rest @ ..] => (Some(id.to_string()), rest),
                    rest => (None, rest),
                };
                match rest {
                    ["->", var] => Ok(Event::Session { kind, tty, bind: parse_var(var)? }),
                    _ => Err(syntax("expected `session <kind> [tty <id>] -> <var>`")),
                }
            }
            ["fork", parent, "->", var] => Ok(Event::Fork { parent: parse_var(parent)?, bind: parse_var(var)? }),
            ["exec", target, image, rest @ ..] => Ok(Event::Exec {
                target: parse_var(target)?,
                image: image.to_string(),
                terminal: parse_terminal(rest)?,
            }),
            ["exit", target] => Ok(Event::Exit { target: parse_var(target)? }),
            _ => Err(syntax(format!("unrecognized event `{}`", tokens.join(" ")))),
        }
    }

    /// Tells whether a token sequence starts with an event keyword.
    pub fn is_event_keyword(word: &str) -> bool {
        matches!(word, "boot" | "ready" | "session" | "fork" | "exec" | "exit")
    }
}

impl std::str::FromStr for Event {
    type Err = EventError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        Event::from_tokens(&tokens)
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Boot => f.write_str("boot"),
            Event::Ready => f.write_str("ready"),
            Event::Session { kind, tty, bind } => {
                write!(f, "session {kind}")?;
                if let Some(id) = tty {
                    write!(f, " tty {id}")?;
                }
                write!(f, " -> {bind}")
            }
            Event::Fork { parent, bind } => write!(f, "fork {parent} -> {bind}"),
            Event::Exec { target, image, terminal } => {
                write!(f, "exec {target} {image}")?;
                if let Some(t) = terminal {
                    write!(f, " {t}")?;
                }
                Ok(())
            }
            Event::Exit { target } => write!(f, "exit {target}"),
        }
    }
}

/// Applies events to a process table while tracking variable bindings.
#[derive(Debug, Clone, Default)]
pub struct Replayer {
    table: Option<ProcessTable>,
    vars: BTreeMap<String, Pid>,
}

impl Replayer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn table(&self) -> Option<&ProcessTable> {
        self.table.as_ref()
    }

    pub fn table_mut(&mut self) -> Option<&mut ProcessTable> {
        self.table.as_mut()
    }

    pub fn resolve(&self, var: &str) -> Result<Pid, EventError> {
        self.vars.get(var).copied().ok_or_else(|| EventError::Unbound(var.to_string()))
    }

    /// Binds an externally created pid, e.g. an operator session.
    pub fn bind(&mut self, var: &str, pid: Pid) -> Result<(), EventError> {
        if self.vars.contains_key(var) {
            return Err(EventError::Rebound(var.to_string()));
        }
        self.vars.insert(var.to_string(), pid);
        Ok(())
    }

    /// Applies one event; returns the pid it created, if any.
    pub fn apply(&mut self, event: &Event) -> Result<Option<Pid>, EventError> {
        if let Event::Boot = event {
            if self.table.is_some() {
                return Err(EventError::AlreadyBooted);
            }
            self.table = Some(ProcessTable::boot());
            self.vars.insert(ROOT_VAR.to_string(), ROOT_PID);
            return Ok(Some(ROOT_PID));
        }
        if self.table.is_none() {
            return Err(EventError::NotBooted);
        }
        match event {
            Event::Boot => unreachable!("handled above"),
            Event::Ready => {
                self.table_mut().unwrap().mark_ready()?;
                Ok(None)
            }
            Event::Session { kind, tty, bind } => {
                self.check_free(bind)?;
                let terminal = match tty {
                    None => TerminalAssociation::none(),
                    Some(id) if is_pty(id) => TerminalAssociation::pty(id.clone(), Some(*kind)),
                    Some(id) => TerminalAssociation::console(id.clone()),
                };
                let pid = self.table_mut().unwrap().session_entry(SessionEntry::new(*kind, terminal))?;
                self.vars.insert(bind.clone(), pid);
                Ok(Some(pid))
            }
            Event::Fork { parent, bind } => {
                self.check_free(bind)?;
                let parent = self.resolve(parent)?;
                let pid = self.table_mut().unwrap().fork(parent)?;
                self.vars.insert(bind.clone(), pid);
                Ok(Some(pid))
            }
            Event::Exec { target, image, terminal } => {
                let pid = self.resolve(target)?;
                let table = self.table_mut().unwrap();
                let observed = match terminal {
                    None => match table.get(pid) {
                        Some(rec) => rec.terminal.clone(),
                        None => return Err(KernelError::NoSuchProcess(pid).into()),
                    },
                    Some(TerminalClaim::NoTty) => TerminalAssociation::none(),
                    Some(TerminalClaim::Tty(id)) if is_pty(id) => {
                        TerminalAssociation::pty(id.clone(), table.terminal_owner(id))
                    }
                    Some(TerminalClaim::Tty(id)) => TerminalAssociation::console(id.clone()),
                };
                table.exec(pid, image.clone(), observed)?;
                Ok(None)
            }
            Event::Exit { target } => {
                let pid = self.resolve(target)?;
                self.table_mut().unwrap().exit(pid)?;
                Ok(None)
            }
        }
    }

    fn check_free(&self, var: &str) -> Result<(), EventError> {
        if self.vars.contains_key(var) {
            Err(EventError::Rebound(var.to_string()))
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::origin::Origin;

    fn replay(lines: &[&str]) -> Result<Replayer, EventError> {
        let mut r = Replayer::new();
        for l in lines {
            r.apply(&l.parse()?)?;
        }
        Ok(r)
    }

    #[test]
    fn display_round_trips() {
        for line in [
            "boot",
            "ready",
            "session remote-login tty pts/0 -> sh",
            "session service-start -> unit",
            "fork sh -> child",
            "exec child sudo",
            "exec child sudo tty tty1",
            "exec child loader notty",
            "exit child",
        ] {
            let ev: Event = line.parse().unwrap();
            assert_eq!(ev.to_string(), line);
        }
    }

    #[test]
    fn rejects_malformed_lines() {
        for line in ["", "fork sh", "session telnet -> x", "exec sh", "exec sh bash tty", "fork a -> b c"] {
            assert!(line.parse::<Event>().is_err(), "{line}");
        }
    }

    #[test]
    fn replays_remote_session() {
        let r = replay(&["boot", "ready", "session remote-login tty pts/0 -> sh", "fork sh -> c", "exec c cat tty tty1"])
            .unwrap();
        let table = r.table().unwrap();
        assert_eq!(table.origin_of(r.resolve("c").unwrap()).unwrap(), Origin::Remote);
    }

    #[test]
    fn unbound_and_rebound_variables() {
        assert_eq!(replay(&["boot", "ready", "fork x -> y"]).unwrap_err(), EventError::Unbound("x".into()));
        let err = replay(&["boot", "ready", "session service-start -> a", "fork init -> a"]).unwrap_err();
        assert_eq!(err, EventError::Rebound("a".into()));
        assert_eq!(replay(&["ready"]).unwrap_err(), EventError::NotBooted);
    }

    #[test]
    fn pty_claims_resolve_through_allocation_registry() {
        let r = replay(&[
            "boot",
            "ready",
            "session remote-login tty pts/0 -> sh",
            "fork init -> u1",
            "fork init -> u2",
            "exec u1 bash tty pts/0",
            "exec u2 bash tty pts/7",
        ])
        .unwrap();
        let t = r.table().unwrap();
        assert_eq!(t.origin_of(r.resolve("u1").unwrap()).unwrap(), Origin::Remote);
        assert_eq!(t.origin_of(r.resolve("u2").unwrap()).unwrap(), Origin::Unknown);
    }
}
