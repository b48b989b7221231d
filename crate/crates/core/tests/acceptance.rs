//! Acceptance criteria 1-13, each at its stated tolerance and seed count.
//!
//! Prints one line per criterion and fails at the end if any did not pass.
//! Run alone with `cargo test --release --test acceptance -- --nocapture`.

use subtrack::harness::{verify_with, Status, VerifySpec};

#[test]
fn acceptance_criteria() {
    let spec = VerifySpec { suite: "all".into(), ..Default::default() };
    let report = verify_with(&spec, |entry| println!("{}", entry.line()));
    assert_eq!(report.entries.len(), 13);

    let failed: Vec<String> = report
        .entries
        .iter()
        .filter(|e| e.status != Status::Pass)
        .map(|e| format!("{} ({})", e.criterion, e.suite))
        .collect();
    println!("{} of 13 criteria passed", 13 - failed.len());
    assert!(failed.is_empty(), "criteria not met: {}", failed.join(", "));
}
