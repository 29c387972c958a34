//! Replays a scenario script and prints its transcript. Defaults to the
//! remote post-compromise script shipped with the crate.

use std::path::PathBuf;

use oamac::scenario::{parse_script, run_script, RunOptions};
use oamac::Engine;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args_os().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/remote-post-compromise.scn")
    });
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let script = parse_script(&name, &std::fs::read_to_string(&path)?)?;
    let opts = RunOptions { base_dir: path.parent().map(Into::into), ..RunOptions::default() };
    let transcript = run_script(&script, &Engine::new(), &opts)?;
    print!("{transcript}");
    std::process::exit(if transcript.passed() { 0 } else { 2 });
}
