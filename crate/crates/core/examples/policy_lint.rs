//! Static analysis findings for a policy file (defaults to a misordered one).

use std::path::PathBuf;

use oamac::analyzer::{analyze, check_order_conflicts, render_findings};
use oamac::dsl::parse_policy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args_os().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("policies/btf-exception-reversed.policy")
    });
    let doc = parse_policy(&std::fs::read_to_string(&path)?)?;
    let policy = doc.to_policy();
    println!("{}:", path.display());
    let findings = analyze(&policy);
    if findings.is_empty() {
        println!("no findings");
    } else {
        print!("{}", render_findings(&findings, |i| doc.line_of(i)));
    }
    println!("\norder-dependent pairs:");
    print!("{}", render_findings(&check_order_conflicts(&policy), |i| doc.line_of(i)));
    Ok(())
}
