//! Parsing, error reporting and canonical formatting of policy text.

use oamac::dsl::{format_policy, parse_policy};

const MESSY: &str = "\
# lab machine
enforce-unknown on
path /sys/kernel/btf/ allow service read   # trailing slash is normalized
path /sys//./ deny remote,unknown
iface bpf-prog-load deny service,remote
";

const BROKEN: &str = "\
path /sys deny remote
path sys deny remote
iface bpf-prog-load deny bootstrap
path /etc permit physical
iface bpf-map-update deny remote write
";

fn main() {
    let doc = parse_policy(MESSY).expect("valid policy");
    let canonical = format_policy(&doc);
    println!("canonical form:\n{canonical}");
    assert_eq!(parse_policy(&canonical).expect("reparses"), doc);

    match parse_policy(BROKEN) {
        Ok(_) => println!("unexpectedly valid"),
        Err(e) => {
            println!("{} errors:\n{e}", e.errors.len());
        }
    }
}
