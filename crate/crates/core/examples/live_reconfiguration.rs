//! Policy edits publish a new version that the very next evaluation sees,
//! while concurrent readers only ever observe whole policies.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Barrier};
use std::thread;

use oamac::dsl::parse_rule;
use oamac::{default_policy, AccessRequest, Action, InterfaceId, Origin, PolicyStore};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = Arc::new(PolicyStore::new());
    store.install(default_policy())?;
    let load = AccessRequest::interface(Origin::Service, InterfaceId::new("bpf-prog-load")?);
    println!("v{} service bpf-prog-load: {}", store.version(), store.evaluate(&load));

    let stop = Arc::new(AtomicBool::new(false));
    let started = Arc::new(Barrier::new(2));
    let reader = {
        let started = Arc::clone(&started);
        let (store, stop, load) = (Arc::clone(&store), Arc::clone(&stop), load.clone());
        thread::spawn(move || {
            started.wait();
            let (mut reads, mut last) = (0u64, 0u64);
            while !stop.load(Ordering::Relaxed) {
                let snap = store.snapshot();
                assert!(snap.version() >= last, "versions never go backwards");
                last = snap.version();
                let _ = snap.evaluate(&load);
                reads += 1;
            }
            reads
        })
    };

    started.wait();
    for _ in 0..1000 {
        store.install(default_policy())?;
    }
    let v = store.remove_rule(3)?;
    println!("v{v} service bpf-prog-load: {}", store.evaluate(&load));
    assert_eq!(store.evaluate(&load).action, Action::Allow);

    let v = store.append_rule(parse_rule("iface bpf-prog-load deny remote,service")?)?;
    println!("v{v} service bpf-prog-load: {}", store.evaluate(&load));

    let rejected = store.remove_rule(42);
    println!("remove 42: {:?}, still v{}", rejected.err(), store.version());

    stop.store(true, Ordering::Relaxed);
    println!("concurrent reader performed {} evaluations", reader.join().expect("reader"));
    Ok(())
}
