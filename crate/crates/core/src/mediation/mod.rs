//! The two enforcement planes: filesystem paths and named control-plane
//! interfaces.
//!
//! Each mediation call resolves the subject's origin from the process table,
//! evaluates the live policy and records exactly one audit counter cell.

mod path;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use path::{normalize_path, prefix_match, CanonicalPath, PathError};

use crate::kernel::{KernelError, Pid, ProcessTable};
use crate::policy::{AccessMode, AccessRequest, AuditCounters, Decision, PolicyStore};

/// Counter key used for file-plane decisions.
pub const FILE_POINT: &str = "file";

/// Interfaces known out of the box. Other names are legal in rules.
pub const SEEDED_INTERFACES: [&str; 3] = ["bpf-prog-load", "bpf-map-create", "bpf-map-update"];

/// Name of a mediated control-plane operation: lowercase, hyphen-separated.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InterfaceId(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid interface name `{0}` (expected lowercase words joined by `-`)")]
pub struct InvalidInterface(pub String);

impl InterfaceId {
    pub fn new(name: &str) -> Result<Self, InvalidInterface> {
        let valid = !name.is_empty()
            && name
                .split('-')
                .all(|w| !w.is_empty() && w.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()));
        if valid {
            Ok(Self(name.to_string()))
        } else {
            Err(InvalidInterface(name.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_seeded(&self) -> bool {
        SEEDED_INTERFACES.contains(&self.0.as_str())
    }
}

impl fmt::Display for InterfaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for InterfaceId {
    type Err = InvalidInterface;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InterfaceId::new(s)
    }
}

impl Serialize for InterfaceId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for InterfaceId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        InterfaceId::new(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MediationError {
    #[error(transparent)]
    Process(#[from] KernelError),
    #[error(transparent)]
    Path(#[from] PathError),
}

/// Mediates a file access by `pid`.
pub fn mediate_file(
    table: &ProcessTable,
    store: &PolicyStore,
    counters: &AuditCounters,
    pid: Pid,
    raw_path: &str,
    mode: AccessMode,
) -> Result<Decision, MediationError> {
    let origin = table.origin_of(pid)?;
    let request = AccessRequest::file(origin, normalize_path(raw_path)?, mode);
    let decision = store.evaluate(&request);
    counters.record(FILE_POINT, origin, decision.action);
    Ok(decision)
}

/// Mediates a control-plane operation by `pid`. The counter cell is keyed by
/// the interface name.
pub fn mediate_iface(
    table: &ProcessTable,
    store: &PolicyStore,
    counters: &AuditCounters,
    pid: Pid,
    iface: &InterfaceId,
) -> Result<Decision, MediationError> {
    let origin = table.origin_of(pid)?;
    let decision = store.evaluate(&AccessRequest::interface(origin, iface.clone()));
    counters.record(iface.as_str(), origin, decision.action);
    Ok(decision)
}

/// The live policy store and its audit counters.
#[derive(Debug, Default)]
pub struct Engine {
    pub store: PolicyStore,
    pub counters: AuditCounters,
}

impl Engine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_parts(store: PolicyStore, counters: AuditCounters) -> Self {
        Self { store, counters }
    }

    pub fn mediate_file(
        &self,
        table: &ProcessTable,
        pid: Pid,
        raw_path: &str,
        mode: AccessMode,
    ) -> Result<Decision, MediationError> {
        mediate_file(table, &self.store, &self.counters, pid, raw_path, mode)
    }

    pub fn mediate_iface(&self, table: &ProcessTable, pid: Pid, iface: &InterfaceId) -> Result<Decision, MediationError> {
        mediate_iface(table, &self.store, &self.counters, pid, iface)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{SessionEntry, SessionKind, TerminalAssociation};
    use crate::origin::Origin;
    use crate::policy::{default_policy, Action, EPERM};

    struct Fixture {
        table: ProcessTable,
        engine: Engine,
        physical: Pid,
        remote: Pid,
        service: Pid,
    }

    fn fixture() -> Fixture {
        let mut table = ProcessTable::boot();
        table.mark_ready().unwrap();
        let physical = table
            .session_entry(SessionEntry::new(SessionKind::ConsoleLogin, TerminalAssociation::console("tty1")))
            .unwrap();
        let remote = table
            .session_entry(SessionEntry::new(
                SessionKind::RemoteLogin,
                TerminalAssociation::pty("pts/0", Some(SessionKind::RemoteLogin)),
            ))
            .unwrap();
        let service = table
            .session_entry(SessionEntry::new(SessionKind::ServiceStart, TerminalAssociation::none()))
            .unwrap();
        let engine = Engine::new();
        engine.store.install(default_policy()).unwrap();
        Fixture { table, engine, physical, remote, service }
    }

    fn iface(n: &str) -> InterfaceId {
        InterfaceId::new(n).unwrap()
    }

    #[test]
    fn interface_names() {
        assert!(InterfaceId::new("bpf-prog-load").unwrap().is_seeded());
        assert!(!InterfaceId::new("perf-event-open").unwrap().is_seeded());
        for bad in ["", "BPF", "bpf--load", "-bpf", "bpf_load", "bpf load"] {
            assert!(InterfaceId::new(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn file_plane() {
        let f = fixture();
        let d = f.engine.mediate_file(&f.table, f.remote, "/sys/kernel", AccessMode::Read).unwrap();
        assert_eq!((d.action, d.errno), (Action::Deny, EPERM));
        let d = f.engine.mediate_file(&f.table, f.service, "/sys/kernel/btf/vmlinux", AccessMode::Read).unwrap();
        assert_eq!(d.action, Action::Allow);
        let d = f.engine.mediate_file(&f.table, f.physical, "/etc/oamac/policy", AccessMode::Write).unwrap();
        assert_eq!(d.action, Action::Allow);
        assert_eq!(f.engine.counters.get(FILE_POINT, Origin::Remote, Action::Deny), 1);
        assert_eq!(f.engine.counters.total(), 3);
    }

    #[test]
    fn interface_plane() {
        let f = fixture();
        let e = &f.engine;
        assert_eq!(e.mediate_iface(&f.table, f.service, &iface("bpf-prog-load")).unwrap().action, Action::Deny);
        assert_eq!(e.mediate_iface(&f.table, f.remote, &iface("bpf-map-update")).unwrap().action, Action::Deny);
        assert_eq!(e.mediate_iface(&f.table, f.physical, &iface("bpf-prog-load")).unwrap().action, Action::Allow);
        assert_eq!(e.counters.get("bpf-prog-load", Origin::Service, Action::Deny), 1);
        assert_eq!(e.counters.get("bpf-prog-load", Origin::Physical, Action::Allow), 1);
    }

    #[test]
    fn errors_do_not_count() {
        let mut f = fixture();
        f.table.exit(f.remote).unwrap();
        let err = f.engine.mediate_file(&f.table, f.remote, "/sys", AccessMode::Read).unwrap_err();
        assert_eq!(err, MediationError::Process(KernelError::ProcessExited(f.remote)));
        let err = f.engine.mediate_file(&f.table, f.physical, "sys", AccessMode::Read).unwrap_err();
        assert!(matches!(err, MediationError::Path(PathError::Relative(_))));
        assert!(f.engine.mediate_iface(&f.table, 77, &iface("bpf-prog-load")).is_err());
        assert_eq!(f.engine.counters.total(), 0);
    }

    #[test]
    fn equal_origins_get_equal_decisions() {
        let mut f = fixture();
        let twin = f.table.fork(f.remote).unwrap();
        for p in ["/sys", "/sys/kernel/btf/vmlinux", "/etc/oamac", "/home"] {
            for m in AccessMode::ALL {
                let a = f.engine.mediate_file(&f.table, f.remote, p, m).unwrap();
                let b = f.engine.mediate_file(&f.table, twin, p, m).unwrap();
                assert_eq!(a, b);
            }
        }
    }
}
