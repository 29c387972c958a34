//! Which origins can reach which resources under the baseline policy.

use oamac::analyzer::{reachability, Probe};
use oamac::mediation::{normalize_path, SEEDED_INTERFACES};
use oamac::{default_policy, AccessMode, InterfaceId, Origin};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut probes = vec![
        Probe::read(normalize_path("/sys/kernel")?),
        Probe::read(normalize_path("/sys/kernel/btf/vmlinux")?),
        Probe::File { path: normalize_path("/etc/oamac/policy")?, mode: AccessMode::Write },
    ];
    for name in SEEDED_INTERFACES {
        probes.push(Probe::Interface(InterfaceId::new(name)?));
    }
    let origins = [Origin::Physical, Origin::Remote, Origin::Service, Origin::ControlPlane];
    print!("{}", reachability(&default_policy(), &origins, &probes));
    Ok(())
}
