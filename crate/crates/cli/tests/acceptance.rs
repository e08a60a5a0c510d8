//! The acceptance suite: one pass/fail line per criterion; exits non-zero on any failure.

use std::process::ExitCode;

use pathwise_cli::acceptance::{run_acceptance, AcceptanceOptions};

fn main() -> ExitCode {
    // `cargo test -- --list` must not start the full suite
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let dir = tempfile::tempdir().expect("temporary directory");
    let outcomes = match run_acceptance(&AcceptanceOptions::new(dir.path())) {
        Ok(o) => o,
        Err(e) => {
            println!("acceptance suite aborted: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    for o in &outcomes {
        println!("{o}");
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("acceptance: {passed}/{} criteria passed", outcomes.len());
    if passed == outcomes.len() && outcomes.len() == 10 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
