//! Deterministic model of the kernel process lifecycle.
//!
//! The table assigns an [`Origin`] to every task from kernel-visible signals
//! (session kind, terminal association, ancestry) and propagates it across
//! `fork` and `exec`. Assigned origins are sticky: the only transition ever
//! permitted is out of `Unknown`, which is what rules out origin laundering.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::origin::Origin;

pub type Pid = u32;

/// Pid of the root task created by [`ProcessTable::boot`].
pub const ROOT_PID: Pid = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalKind {
    None,
    PhysicalConsole,
    PseudoTerminal,
}

/// The controlling terminal a task is associated with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminalAssociation {
    pub kind: TerminalKind,
    pub id: Option<String>,
    /// Session kind that allocated a pseudo-terminal.
    pub allocated_by: Option<SessionKind>,
}

impl TerminalAssociation {
    pub fn none() -> Self {
        Self { kind: TerminalKind::None, id: None, allocated_by: None }
    }

    pub fn console(id: impl Into<String>) -> Self {
        Self { kind: TerminalKind::PhysicalConsole, id: Some(id.into()), allocated_by: None }
    }

    pub fn pty(id: impl Into<String>, allocated_by: Option<SessionKind>) -> Self {
        Self { kind: TerminalKind::PseudoTerminal, id: Some(id.into()), allocated_by }
    }

    pub fn is_well_formed(&self) -> bool {
        match self.kind {
            TerminalKind::None => self.id.is_none(),
            TerminalKind::PhysicalConsole => self.id.is_some(),
            TerminalKind::PseudoTerminal => self.id.is_some() && self.allocated_by.is_some(),
        }
    }
}

impl fmt::Display for TerminalAssociation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.kind, &self.id) {
            (TerminalKind::None, _) | (_, None) => f.write_str("notty"),
            (_, Some(id)) => write!(f, "tty {id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionKind {
    ConsoleLogin,
    RemoteLogin,
    ServiceStart,
    ControlPlaneStart,
}

impl SessionKind {
    pub const ALL: [SessionKind; 4] = [
        SessionKind::ConsoleLogin,
        SessionKind::RemoteLogin,
        SessionKind::ServiceStart,
        SessionKind::ControlPlaneStart,
    ];

    pub const fn as_str(self) -> &'static str {
        match self {
            SessionKind::ConsoleLogin => "console-login",
            SessionKind::RemoteLogin => "remote-login",
            SessionKind::ServiceStart => "service-start",
            SessionKind::ControlPlaneStart => "control-plane-start",
        }
    }
}

impl fmt::Display for SessionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SessionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SessionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown session kind `{s}`"))
    }
}

/// A session-entry event observed by the kernel: login, service start, or
/// control-plane session signalled by a trusted component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub kind: SessionKind,
    pub terminal: TerminalAssociation,
}

impl SessionEntry {
    pub fn new(kind: SessionKind, terminal: TerminalAssociation) -> Self {
        Self { kind, terminal }
    }

    pub fn is_well_formed(&self) -> bool {
        if !self.terminal.is_well_formed() {
            return false;
        }
        match self.kind {
            SessionKind::ConsoleLogin => self.terminal.kind == TerminalKind::PhysicalConsole,
            SessionKind::RemoteLogin => {
                self.terminal.kind == TerminalKind::PseudoTerminal
                    && self.terminal.allocated_by == Some(SessionKind::RemoteLogin)
            }
            SessionKind::ServiceStart => self.terminal.kind == TerminalKind::None,
            SessionKind::ControlPlaneStart => true,
        }
    }
}

/// Maps a session entry to an origin. Malformed entries classify as
/// `Unknown`; this function never fails.
pub fn classify(entry: &SessionEntry) -> Origin {
    if !entry.is_well_formed() {
        return Origin::Unknown;
    }
    match entry.kind {
        SessionKind::ConsoleLogin => Origin::Physical,
        SessionKind::RemoteLogin => Origin::Remote,
        SessionKind::ServiceStart => Origin::Service,
        SessionKind::ControlPlaneStart => Origin::ControlPlane,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessRecord {
    pub pid: Pid,
    /// `0` for the root task.
    pub ppid: Pid,
    pub origin: Origin,
    pub terminal: TerminalAssociation,
    pub image: String,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KernelError {
    #[error("system is already marked ready")]
    AlreadyReady,
    #[error("session entries are only accepted after the system is marked ready")]
    NotReady,
    #[error("no such process: pid {0}")]
    NoSuchProcess(Pid),
    #[error("process {0} has exited")]
    ProcessExited(Pid),
    #[error("the root task cannot exit")]
    RootImmortal,
}

/// Simulated kernel process table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessTable {
    processes: BTreeMap<Pid, ProcessRecord>,
    next_pid: Pid,
    ready: bool,
    /// Pseudo-terminals allocated by session entries, by terminal id.
    terminals: BTreeMap<String, SessionKind>,
}

impl ProcessTable {
    /// Creates a table holding only the root task (pid 1, `Bootstrap`).
    pub fn boot() -> Self {
        let root = ProcessRecord {
            pid: ROOT_PID,
            ppid: 0,
            origin: Origin::Bootstrap,
            terminal: TerminalAssociation::none(),
            image: "init".to_string(),
            alive: true,
        };
        Self {
            processes: BTreeMap::from([(ROOT_PID, root)]),
            next_pid: ROOT_PID + 1,
            ready: false,
            terminals: BTreeMap::new(),
        }
    }

    pub fn is_ready(&self) -> bool {
        self.ready
    }

    /// Closes the bootstrap phase. Existing `Bootstrap` tasks keep their origin.
    pub fn mark_ready(&mut self) -> Result<(), KernelError> {
        if self.ready {
            return Err(KernelError::AlreadyReady);
        }
        self.ready = true;
        Ok(())
    }

    pub fn get(&self, pid: Pid) -> Option<&ProcessRecord> {
        self.processes.get(&pid)
    }

    pub fn processes(&self) -> impl Iterator<Item = &ProcessRecord> {
        self.processes.values()
    }

    pub fn len(&self) -> usize {
        self.processes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.processes.is_empty()
    }

    /// Origin of a live process.
    pub fn origin_of(&self, pid: Pid) -> Result<Origin, KernelError> {
        Ok(self.live(pid)?.origin)
    }

    /// Session kind that allocated the given pseudo-terminal, if any.
    pub fn terminal_owner(&self, id: &str) -> Option<SessionKind> {
        self.terminals.get(id).copied()
    }

    /// Starts a new session as a child of the root task.
    pub fn session_entry(&mut self, entry: SessionEntry) -> Result<Pid, KernelError> {
        if !self.ready {
            return Err(KernelError::NotReady);
        }
        let origin = classify(&entry);
        if origin != Origin::Unknown && entry.terminal.kind == TerminalKind::PseudoTerminal {
            if let Some(id) = &entry.terminal.id {
                self.terminals.insert(id.clone(), entry.kind);
            }
        }
        let image = format!("{}-session", entry.kind);
        Ok(self.spawn(ROOT_PID, origin, entry.terminal, image))
    }

    /// Clones `parent`. The child inherits origin and terminal, except that a
    /// `Bootstrap` parent yields an `Unknown` child once the system is ready.
    pub fn fork(&mut self, parent: Pid) -> Result<Pid, KernelError> {
        let p = self.live(parent)?;
        let origin = match p.origin {
            Origin::Bootstrap if self.ready => Origin::Unknown,
            o => o,
        };
        let (terminal, image) = (p.terminal.clone(), p.image.clone());
        Ok(self.spawn(parent, origin, terminal, image))
    }

    /// Replaces the image of `pid`.
    ///
    /// Origin only changes when it is currently `Unknown`: a classified
    /// parent's origin wins, otherwise the observed terminal is classified as
    /// a synthetic session entry. Any other origin is kept no matter what
    /// terminal is observed.
    pub fn exec(
        &mut self,
        pid: Pid,
        image: impl Into<String>,
        observed: TerminalAssociation,
    ) -> Result<(), KernelError> {
        let (ppid, origin) = {
            let rec = self.live(pid)?;
            (rec.ppid, rec.origin)
        };
        let reclassified = if origin == Origin::Unknown {
            let parent_origin = self.processes.get(&ppid).map(|p| p.origin);
            Some(match parent_origin {
                Some(o @ (Origin::Physical | Origin::Remote | Origin::Service | Origin::ControlPlane)) => o,
                _ => classify(&synthetic_entry(&observed)),
            })
        } else {
            None
        };
        let rec = self.processes.get_mut(&pid).expect("checked live above");
        rec.image = image.into();
        if let Some(o) = reclassified {
            rec.origin = o;
            rec.terminal = observed;
        }
        Ok(())
    }

    /// Marks a process dead. The record stays in the table for ancestry queries.
    pub fn exit(&mut self, pid: Pid) -> Result<(), KernelError> {
        if pid == ROOT_PID {
            return Err(KernelError::RootImmortal);
        }
        self.live(pid)?;
        self.processes.get_mut(&pid).expect("checked live above").alive = false;
        Ok(())
    }

    /// Pids from `pid` up to the root, inclusive.
    pub fn ancestry(&self, pid: Pid) -> Vec<Pid> {
        let mut chain = Vec::new();
        let mut cur = pid;
        while let Some(rec) = self.processes.get(&cur) {
            chain.push(cur);
            if rec.ppid == 0 {
                break;
            }
            cur = rec.ppid;
        }
        chain
    }

    /// Canonical serialized form; identical event sequences give identical bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("process table serializes")
    }

    fn live(&self, pid: Pid) -> Result<&ProcessRecord, KernelError> {
        match self.processes.get(&pid) {
            None => Err(KernelError::NoSuchProcess(pid)),
            Some(rec) if !rec.alive => Err(KernelError::ProcessExited(pid)),
            Some(rec) => Ok(rec),
        }
    }

    fn spawn(&mut self, ppid: Pid, origin: Origin, terminal: TerminalAssociation, image: String) -> Pid {
        let pid = self.next_pid;
        self.next_pid += 1;
        self.processes.insert(pid, ProcessRecord { pid, ppid, origin, terminal, image, alive: true });
        pid
    }
}

/// The session entry implied by a terminal observed at exec time.
fn synthetic_entry(observed: &TerminalAssociation) -> SessionEntry {
    let kind = match observed.kind {
        TerminalKind::None => SessionKind::ServiceStart,
        TerminalKind::PhysicalConsole => SessionKind::ConsoleLogin,
        // An unattributed pty stays malformed and classifies as Unknown.
        TerminalKind::PseudoTerminal => observed.allocated_by.unwrap_or(SessionKind::RemoteLogin),
    };
    SessionEntry::new(kind, observed.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ready_table() -> ProcessTable {
        let mut t = ProcessTable::boot();
        t.mark_ready().unwrap();
        t
    }

    fn remote_entry() -> SessionEntry {
        SessionEntry::new(
            SessionKind::RemoteLogin,
            TerminalAssociation::pty("pts/0", Some(SessionKind::RemoteLogin)),
        )
    }

    #[test]
    fn boot_has_bootstrap_root() {
        let t = ProcessTable::boot();
        assert_eq!(t.len(), 1);
        let root = t.get(ROOT_PID).unwrap();
        assert_eq!(root.origin, Origin::Bootstrap);
        assert_eq!(root.terminal.kind, TerminalKind::None);
        assert!(!t.is_ready());
    }

    #[test]
    fn fork_before_ready_stays_bootstrap() {
        let mut t = ProcessTable::boot();
        let child = t.fork(ROOT_PID).unwrap();
        assert_eq!(t.origin_of(child).unwrap(), Origin::Bootstrap);
    }

    #[test]
    fn no_bootstrap_after_ready() {
        let mut t = ProcessTable::boot();
        let early = t.fork(ROOT_PID).unwrap();
        t.mark_ready().unwrap();
        assert_eq!(t.origin_of(ROOT_PID).unwrap(), Origin::Bootstrap);
        assert_eq!(t.origin_of(early).unwrap(), Origin::Bootstrap);

        let svc = t
            .session_entry(SessionEntry::new(SessionKind::ServiceStart, TerminalAssociation::none()))
            .unwrap();
        assert_eq!(t.origin_of(svc).unwrap(), Origin::Service);
        let late = t.fork(early).unwrap();
        assert_eq!(t.origin_of(late).unwrap(), Origin::Unknown);
    }

    #[test]
    fn mark_ready_twice_fails() {
        let mut t = ready_table();
        assert_eq!(t.mark_ready(), Err(KernelError::AlreadyReady));
    }

    #[test]
    fn classify_session_kinds() {
        let console = SessionEntry::new(SessionKind::ConsoleLogin, TerminalAssociation::console("tty1"));
        assert_eq!(classify(&console), Origin::Physical);
        assert_eq!(classify(&remote_entry()), Origin::Remote);
        let svc = SessionEntry::new(SessionKind::ServiceStart, TerminalAssociation::none());
        assert_eq!(classify(&svc), Origin::Service);
        let cp = SessionEntry::new(SessionKind::ControlPlaneStart, TerminalAssociation::none());
        assert_eq!(classify(&cp), Origin::ControlPlane);
    }

    #[test]
    fn malformed_entries_classify_unknown() {
        let svc_with_tty = SessionEntry::new(SessionKind::ServiceStart, TerminalAssociation::console("tty1"));
        assert_eq!(classify(&svc_with_tty), Origin::Unknown);
        let remote_on_console = SessionEntry::new(SessionKind::RemoteLogin, TerminalAssociation::console("tty1"));
        assert_eq!(classify(&remote_on_console), Origin::Unknown);
        let orphan_pty = SessionEntry::new(SessionKind::RemoteLogin, TerminalAssociation::pty("pts/9", None));
        assert_eq!(classify(&orphan_pty), Origin::Unknown);
        let bad_none = TerminalAssociation { kind: TerminalKind::None, id: Some("x".into()), allocated_by: None };
        let console_bad = SessionEntry::new(SessionKind::ControlPlaneStart, bad_none);
        assert_eq!(classify(&console_bad), Origin::Unknown);
    }

    #[test]
    fn session_before_ready_fails() {
        let mut t = ProcessTable::boot();
        assert_eq!(t.session_entry(remote_entry()), Err(KernelError::NotReady));
    }

    #[test]
    fn remote_session_and_fork_chain() {
        let mut t = ready_table();
        let sh = t.session_entry(remote_entry()).unwrap();
        assert_eq!(t.get(sh).unwrap().ppid, ROOT_PID);
        let mut cur = sh;
        for _ in 0..3 {
            cur = t.fork(cur).unwrap();
            assert_eq!(t.origin_of(cur).unwrap(), Origin::Remote);
        }
        assert_eq!(t.ancestry(cur).len(), 5);
        assert_eq!(t.terminal_owner("pts/0"), Some(SessionKind::RemoteLogin));
    }

    #[test]
    fn forged_console_does_not_launder_remote() {
        let mut t = ready_table();
        let sh = t.session_entry(remote_entry()).unwrap();
        t.exec(sh, "bash", TerminalAssociation::console("tty1")).unwrap();
        assert_eq!(t.origin_of(sh).unwrap(), Origin::Remote);
        assert_eq!(t.get(sh).unwrap().image, "bash");
    }

    #[test]
    fn physical_sudo_stays_physical() {
        let mut t = ready_table();
        let sh = t
            .session_entry(SessionEntry::new(SessionKind::ConsoleLogin, TerminalAssociation::console("tty1")))
            .unwrap();
        let sudo = t.fork(sh).unwrap();
        t.exec(sudo, "sudo", TerminalAssociation::console("tty1")).unwrap();
        assert_eq!(t.origin_of(sudo).unwrap(), Origin::Physical);
    }

    #[test]
    fn unknown_exec_without_terminal_becomes_service() {
        let mut t = ready_table();
        let unit = t.fork(ROOT_PID).unwrap();
        assert_eq!(t.origin_of(unit).unwrap(), Origin::Unknown);
        t.exec(unit, "loader", TerminalAssociation::none()).unwrap();
        assert_eq!(t.origin_of(unit).unwrap(), Origin::Service);
    }

    #[test]
    fn unknown_child_adopts_classified_parent() {
        let mut t = ready_table();
        let odd = t
            .session_entry(SessionEntry::new(SessionKind::ServiceStart, TerminalAssociation::console("tty1")))
            .unwrap();
        assert_eq!(t.origin_of(odd).unwrap(), Origin::Unknown);
        let child = t.fork(odd).unwrap();
        t.exec(odd, "daemon", TerminalAssociation::pty("pts/0", Some(SessionKind::RemoteLogin))).unwrap();
        assert_eq!(t.origin_of(odd).unwrap(), Origin::Remote);
        // Ancestry outranks the terminal the child claims.
        t.exec(child, "sh", TerminalAssociation::console("tty1")).unwrap();
        assert_eq!(t.origin_of(child).unwrap(), Origin::Remote);
    }

    #[test]
    fn exit_rules() {
        let mut t = ready_table();
        let sh = t.session_entry(remote_entry()).unwrap();
        let leaf = t.fork(sh).unwrap();
        t.exit(leaf).unwrap();
        assert!(!t.get(leaf).unwrap().alive);
        assert_eq!(t.fork(leaf), Err(KernelError::ProcessExited(leaf)));
        assert_eq!(t.exit(leaf), Err(KernelError::ProcessExited(leaf)));
        assert_eq!(t.exit(ROOT_PID), Err(KernelError::RootImmortal));
        assert_eq!(t.exit(99), Err(KernelError::NoSuchProcess(99)));
        assert_eq!(t.ancestry(leaf), vec![leaf, sh, ROOT_PID]);
    }
}
