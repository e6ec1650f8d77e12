use std::process::ExitCode;

use wightman::verify::{run_criterion, DEFAULT_SEED};

fn main() -> ExitCode {
    let mut failed = 0;
    for id in 1..=9 {
        let report = run_criterion(id, DEFAULT_SEED);
        println!("{report}");
        if !report.pass {
            failed += 1;
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
