//! Sessions receive an origin at creation and every descendant inherits it.
//! A remote shell that execs `login` while claiming the physical console
//! stays remote.

use oamac::{Origin, ProcessTable, SessionEntry, SessionKind, TerminalAssociation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut table = ProcessTable::boot();
    let early = table.fork(oamac::kernel::ROOT_PID)?;
    table.mark_ready()?;

    let console = table.session_entry(SessionEntry::new(SessionKind::ConsoleLogin, TerminalAssociation::console("tty1")))?;
    let ssh = table.session_entry(SessionEntry::new(
        SessionKind::RemoteLogin,
        TerminalAssociation::pty("pts/0", Some(SessionKind::RemoteLogin)),
    ))?;
    let unit = table.session_entry(SessionEntry::new(SessionKind::ServiceStart, TerminalAssociation::none()))?;

    let sudo = table.fork(console)?;
    table.exec(sudo, "/usr/bin/sudo", TerminalAssociation::console("tty1"))?;

    let shell = table.fork(ssh)?;
    table.exec(shell, "/bin/login", TerminalAssociation::console("tty1"))?;

    // forked from init after ready: unknown until exec
    let late = table.fork(oamac::kernel::ROOT_PID)?;
    let before = table.origin_of(late)?;
    table.exec(late, "/usr/bin/getty", TerminalAssociation::console("tty2"))?;

    println!("{:<5} {:<5} {:<14} image", "pid", "ppid", "origin");
    for p in table.processes() {
        println!("{:<5} {:<5} {:<14} {}", p.pid, p.ppid, p.origin.label(), p.image);
    }
    println!();
    println!("early boot child: {}", table.origin_of(early)?.label());
    println!("sudo under console: {}", table.origin_of(sudo)?.label());
    println!("ssh shell after console claim: {}", table.origin_of(shell)?.label());
    println!("service unit: {}", table.origin_of(unit)?.label());
    println!("late init child: {} -> {}", before.label(), table.origin_of(late)?.label());
    assert_eq!(table.origin_of(shell)?, Origin::Remote);
    Ok(())
}
