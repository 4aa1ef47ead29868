//! Runs every acceptance criterion, prints one `criterion N: PASS|FAIL` line
//! each and exits nonzero if any failed. Pass criterion numbers as arguments
//! to run a subset.

use std::panic;
use std::time::Instant;

use nhsync_validation::{outcome_from_panic, Outcome, CRITERIA};

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for c in CRITERIA.iter().filter(|c| only.is_empty() || only.contains(&c.number)) {
        let start = Instant::now();
        let Outcome { ok, detail } = panic::catch_unwind(c.check).unwrap_or_else(outcome_from_panic);
        let elapsed = start.elapsed();
        let pass = ok && elapsed <= c.limit;
        println!(
            "criterion {}: {} {detail} [{:.1}s, limit {}s]",
            c.number,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
        if !pass {
            failed.push(c.number);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
