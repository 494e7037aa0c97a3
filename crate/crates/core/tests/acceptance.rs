//! Runs every acceptance criterion and prints one line per criterion.
//!
//! Set `NLW_CRITERIA=2,5` to run a subset.

use std::process::ExitCode;

use nlw_core::verify::{run_criterion, VerifyOptions};

fn main() -> ExitCode {
    let ids: Vec<u8> = match std::env::var("NLW_CRITERIA") {
        Ok(s) => s.split(',').filter_map(|x| x.trim().parse().ok()).collect(),
        Err(_) => (1..=10).collect(),
    };
    let opts = VerifyOptions::default();
    let mut failed = 0;
    for id in ids {
        let res = run_criterion(id, &opts).expect("known criterion");
        println!("{res}");
        failed += usize::from(!res.passed);
    }
    println!("acceptance: {failed} failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
