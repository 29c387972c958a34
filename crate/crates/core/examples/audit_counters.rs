//! Every mediation call increments exactly one counter cell.

use oamac::{default_policy, AccessMode, Engine, InterfaceId, ProcessTable, SessionEntry, SessionKind, TerminalAssociation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut table = ProcessTable::boot();
    table.mark_ready()?;
    let ssh = table.session_entry(SessionEntry::new(
        SessionKind::RemoteLogin,
        TerminalAssociation::pty("pts/0", Some(SessionKind::RemoteLogin)),
    ))?;
    let admin = table.session_entry(SessionEntry::new(SessionKind::ConsoleLogin, TerminalAssociation::console("tty1")))?;
    let engine = Engine::new();
    engine.store.install(default_policy())?;

    let mut calls = 0u64;
    for pid in [ssh, admin] {
        for path in ["/sys", "/sys/kernel/btf/vmlinux", "/etc/oamac/policy", "/tmp"] {
            engine.mediate_file(&table, pid, path, AccessMode::Read)?;
            calls += 1;
        }
        engine.mediate_iface(&table, pid, &InterfaceId::new("bpf-map-update")?)?;
        calls += 1;
    }
    print!("{}", engine.counters.render());
    println!("calls {calls}, counted {}", engine.counters.total());
    assert_eq!(calls, engine.counters.total());
    Ok(())
}
