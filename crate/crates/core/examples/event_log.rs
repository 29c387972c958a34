//! Replays a textual process-lifecycle log and prints the resulting table.

use oamac::event::{Event, Replayer};

const LOG: &str = "\
boot
ready
session remote-login tty pts/3 -> ssh
fork ssh -> child
exec child /usr/bin/python3 notty
session control-plane-start -> agent
fork agent -> helper
exit child
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut replay = Replayer::new();
    for line in LOG.lines() {
        let event: Event = line.parse()?;
        match replay.apply(&event)? {
            Some(pid) => println!("{event:<45} => pid {pid}"),
            None => println!("{event}"),
        }
    }
    let table = replay.table().expect("booted");
    println!("\n{}", table.to_json());
    Ok(())
}
