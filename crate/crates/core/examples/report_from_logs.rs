//! Rebuilds the report of a stored run from its CSV logs and lists the
//! merged topics and lap times.
//!
//! cargo run --example report_from_logs -- /tmp/runs/overtake-seed7

use std::path::PathBuf;

use racesim::telemetry::{read_tables, regenerate_report, LOGS_DIR};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let Some(dir) = std::env::args().nth(1).map(PathBuf::from) else {
        eprintln!("usage: report_from_logs <run directory>");
        std::process::exit(2);
    };
    for (topic, t) in read_tables(&dir.join(LOGS_DIR))? {
        println!("{topic:28} {:6} rows  {:7.2} Hz  {} columns", t.len(), t.frequency(), t.columns.len());
    }
    let report = regenerate_report(&dir, true)?;
    for lap in &report.laps {
        println!("lap {} complete={} time={:?}", lap.lap, lap.complete, lap.time);
    }
    println!("passed: {}", report.general.passed);
    Ok(())
}
