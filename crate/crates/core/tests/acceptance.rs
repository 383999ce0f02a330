//! Acceptance suite. Runs every criterion with the default configuration and
//! prints one PASS/FAIL line each. Numeric arguments restrict the run, e.g.
//! `cargo test -p nelson-lab --test acceptance -- 1 4 7`.

use std::process::ExitCode;

use nelson_lab::acceptance::{run_criterion, CRITERIA};
use nelson_lab::config::LabConfig;

fn main() -> ExitCode {
    let wanted: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let cfg = LabConfig::default();
    let mut failed = 0;
    let mut ran = 0;
    for (id, _) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let outcome = run_criterion(id, &cfg);
        println!("{}", outcome.line());
        ran += 1;
        if !outcome.passed {
            failed += 1;
        }
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
