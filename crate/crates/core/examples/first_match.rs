//! First-match evaluation of the baseline policy, including exempt origins.

use oamac::{default_policy, AccessMode, AccessRequest, InterfaceId, Origin};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let policy = default_policy();
    for (i, rule) in policy.rules.iter().enumerate() {
        println!("{i}: {rule}");
    }
    println!();

    let requests = [
        AccessRequest::raw_file(Origin::Remote, "/sys/kernel/btf/vmlinux", AccessMode::Read)?,
        AccessRequest::raw_file(Origin::Remote, "/sys/kernel/btf/vmlinux", AccessMode::Write)?,
        AccessRequest::raw_file(Origin::Remote, "/sys/kernel/debug", AccessMode::Read)?,
        AccessRequest::raw_file(Origin::Remote, "/system", AccessMode::Read)?,
        AccessRequest::raw_file(Origin::Service, "/etc/oamac/policy", AccessMode::Write)?,
        AccessRequest::raw_file(Origin::Physical, "/etc/oamac/policy", AccessMode::Write)?,
        AccessRequest::interface(Origin::Service, InterfaceId::new("bpf-prog-load")?),
        AccessRequest::interface(Origin::ControlPlane, InterfaceId::new("bpf-prog-load")?),
        AccessRequest::interface(Origin::Bootstrap, InterfaceId::new("bpf-prog-load")?),
        AccessRequest::raw_file(Origin::Unknown, "/sys", AccessMode::Read)?,
    ];
    for req in &requests {
        let d = policy.evaluate(req);
        println!("{:<14} {:<32} {d}", req.origin.label(), req.object.to_string());
    }
    Ok(())
}
