//! Runs scenario files the way `statmap run` does and prints a summary.
//!
//!     cargo run --example run_scenario -- examples/scenarios/great_circle_unstable.json

use std::path::PathBuf;

use statmap::runner::{run_many, suite_paths};

fn main() -> statmap::Result<()> {
    let args: Vec<PathBuf> = std::env::args_os().skip(1).map(PathBuf::from).collect();
    let paths = if args.is_empty() {
        suite_paths(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/scenarios"))?
    } else {
        args
    };
    for out in run_many(&paths, 2) {
        let r = &out.report;
        println!("{} [{}] exit {}", r.name, if r.passed { "pass" } else { "fail" }, r.exit_code);
        if let Some(s) = &r.results.spectrum {
            println!("    index {}, nullity {}, λ_min {:.6}", s.index, s.nullity, s.lambda_min());
        }
        for a in r.assertions.iter().filter(|a| !a.passed) {
            println!("    failed {}: {}", a.name, a.detail);
        }
        if let Some(e) = &r.error {
            println!("    error {}: {}", e.kind, e.message);
        }
    }
    Ok(())
}
