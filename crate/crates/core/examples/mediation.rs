//! Mediating requests from live processes through the engine.

use oamac::{default_policy, AccessMode, Engine, InterfaceId, ProcessTable, SessionEntry, SessionKind, TerminalAssociation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut table = ProcessTable::boot();
    table.mark_ready()?;
    let ssh = table.session_entry(SessionEntry::new(
        SessionKind::RemoteLogin,
        TerminalAssociation::pty("pts/0", Some(SessionKind::RemoteLogin)),
    ))?;
    let unit = table.session_entry(SessionEntry::new(SessionKind::ServiceStart, TerminalAssociation::none()))?;

    let engine = Engine::new();
    engine.store.install(default_policy())?;

    for path in ["/sys/kernel", "/sys/kernel/./btf//vmlinux", "/etc/oamac/../oamac/policy", "/home/user"] {
        let d = engine.mediate_file(&table, ssh, path, AccessMode::Read)?;
        println!("pid {ssh} read {path:<30} {d}");
    }
    let load = InterfaceId::new("bpf-prog-load")?;
    println!("pid {unit} iface {load:<29} {}", engine.mediate_iface(&table, unit, &load)?);

    match engine.mediate_file(&table, ssh, "relative/path", AccessMode::Read) {
        Ok(d) => println!("unexpected: {d}"),
        Err(e) => println!("rejected: {e}"),
    }
    println!("\ncounters:\n{}", engine.counters.render());
    Ok(())
}
