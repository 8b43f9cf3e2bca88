//! Classify a build or run log: `cargo run --example triage_log -- build.log`

use std::io::Read;

use envrepair::triage::{classify, excerpt_for_prompt};
use envrepair::validator::{BuildOutcome, OutcomePhase, OutcomeStatus};

fn main() -> anyhow::Result<()> {
    let log = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    let outcome = BuildOutcome {
        phase: if log.contains("container exited with code") { OutcomePhase::Run } else { OutcomePhase::Build },
        status: OutcomeStatus::Failure,
        exit_code: Some(1),
        log,
        duration_seconds: 0.0,
        candidate_key: String::new(),
    };
    let report = classify(&outcome);
    println!("class:    {}", report.primary_class);
    println!("detected: {:?}", report.detected);
    for (k, v) in &report.payload {
        println!("  {k} = {v}");
    }
    println!("complete: {}", report.is_complete());
    println!("--- excerpt ---\n{}", excerpt_for_prompt(&outcome, report.primary_class));
    Ok(())
}
