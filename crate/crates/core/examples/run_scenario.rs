//! Runs a scenario directory, stores the run and prints the report summary.
//!
//! cargo run --example run_scenario -- crates/core/scenarios/overtake /tmp/runs

use std::path::PathBuf;

use racesim::scenario::{run_scenario, RunOptions, Scenario};
use racesim::telemetry::write_run;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "crates/core/scenarios/overtake".into()));
    let out = PathBuf::from(args.next().unwrap_or_else(|| std::env::temp_dir().join("racesim-example").display().to_string()));
    let scn = Scenario::load(&dir)?;
    let run = run_scenario(&scn, &RunOptions::default())?;
    println!(
        "{}: {:?} at {:.2} s, {} messages, digest {}",
        scn.name,
        run.outcome.reason,
        run.outcome.end_time,
        run.trace.len(),
        run.meta.trace_digest
    );
    let run_dir = out.join(&scn.name);
    let report = write_run(&run_dir, &run.trace, &run.schemas, &run.meta, &run.track)?;
    println!("passed: {}, distance {:.0} m", report.general.passed, report.general.distance);
    for e in &report.errors {
        println!("  {} at lap {} s={:.1}: {}", e.test, e.lap, e.s, e.description);
    }
    if let Some(g) = &report.ghosts {
        for o in &g.overtakes {
            println!("  overtake of {}: {:?} in {:.2} s", o.ghost, o.outcome, o.time_to_overtake);
        }
    }
    println!("report in {}", run_dir.display());
    Ok(())
}
