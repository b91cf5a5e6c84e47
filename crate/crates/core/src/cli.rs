//! Command-line front end: `run`, `batch` and `report`.
//!
//! Exit codes: 0 when every test passed, 1 when a test failed or the run
//! ended abnormally, 2 for configuration and usage errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::scenario::{run_scenario, ReportMode, RunOptions, Scenario};
use crate::simbus::PacingMode;
use crate::telemetry::{self, RunReport};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Seed fallback when neither the flag nor the config sets one.
pub const SEED_ENV: &str = "RACESIM_SEED";

#[derive(Debug, Parser)]
#[command(name = "racesim", version, about = "Closed-loop race car simulation and CI test runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario directory.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        opts: RunFlags,
    },
    /// Run every scenario under the given directories, optionally filtered
    /// by tag.
    Batch {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Keep only scenarios carrying one of these tags (repeatable).
        #[arg(long = "tag")]
        tags: Vec<String>,
        /// Parallel runs; defaults to the number of CPUs.
        #[arg(long, short = 'j')]
        jobs: Option<usize>,
        /// Skip scenarios not yet started once one has failed.
        #[arg(long)]
        stop_on_failure: bool,
        #[command(flatten)]
        opts: RunFlags,
    },
    /// Regenerate the report of a stored run from its logs.
    Report {
        run_dir: PathBuf,
        /// Also write the per-module reports.
        #[arg(long)]
        full: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunFlags {
    /// Output root; each run writes to `<out>/<scenario>-seed<seed>`.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pace against the wall clock at this speed-up factor.
    #[arg(long)]
    pub speedup: Option<f64>,
    /// Run as fast as possible regardless of the config.
    #[arg(long, conflicts_with = "speedup")]
    pub fast: bool,
    /// Feed the stack ground-truth localization.
    #[arg(long)]
    pub ground_truth: bool,
    /// Write the overview report only, even if the config asks for more.
    #[arg(long)]
    pub overview_only: bool,
    /// Delete the logs of passing runs.
    #[arg(long)]
    pub prune_logs: bool,
}

impl RunFlags {
    fn options(&self) -> Result<RunOptions, String> {
        let seed = match self.seed {
            Some(s) => Some(s),
            None => env_seed()?,
        };
        let pacing = if self.fast {
            Some(PacingMode::AsFastAsPossible)
        } else {
            self.speedup.map(|_| PacingMode::WallClockScaled)
        };
        Ok(RunOptions {
            seed,
            speedup: self.speedup,
            pacing,
            ground_truth: self.ground_truth.then_some(true),
        })
    }
}

fn env_seed() -> Result<Option<u64>, String> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("{SEED_ENV}={v} is not an unsigned integer")),
        Err(_) => Ok(None),
    }
}

/// Result of one scenario in a batch or a single run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub name: String,
    pub outcome: RunStatus,
    pub best_lap: Option<f64>,
    pub errors: usize,
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Pass,
    Fail,
    /// Configuration problem; the message explains it.
    Error(String),
    Skipped,
}

impl RunSummary {
    /// Machine-parsable summary line: name, status, best lap, error count.
    pub fn line(&self) -> String {
        let status = match &self.outcome {
            RunStatus::Pass => "PASS",
            RunStatus::Fail => "FAIL",
            RunStatus::Error(_) => "ERROR",
            RunStatus::Skipped => "SKIP",
        };
        let lap = self.best_lap.map_or("-".to_owned(), |t| format!("{t:.3}"));
        format!("{}\t{status}\t{lap}\t{}", self.name, self.errors)
    }
}

/// Directory name of a run under the output root.
pub fn run_dir_name(scenario: &str, seed: u64) -> String {
    format!("{scenario}-seed{seed}")
}

/// Load, simulate and report one scenario; returns the report and the run
/// directory.
pub fn simulate(scenario: &Scenario, flags: &RunFlags) -> Result<(RunReport, PathBuf), String> {
    let opts = flags.options()?;
    let mut scenario = scenario.clone();
    if flags.overview_only {
        scenario.config.report.mode = ReportMode::OverviewOnly;
    }
    let out = run_scenario(&scenario, &opts).map_err(|e| e.to_string())?;
    let dir = flags.out.join(run_dir_name(&scenario.name, out.meta.seed));
    let report =
        telemetry::write_run(&dir, &out.trace, &out.schemas, &out.meta, &out.track).map_err(|e| e.to_string())?;
    if flags.prune_logs && report.general.passed {
        let _ = std::fs::remove_dir_all(dir.join(telemetry::LOGS_DIR));
    }
    Ok((report, dir))
}

/// [`simulate`] folded into a summary line.
pub fn execute(scenario: &Scenario, flags: &RunFlags) -> RunSummary {
    match simulate(scenario, flags) {
        Ok((report, dir)) => summarize(&scenario.name, &report, Some(dir)),
        Err(msg) => RunSummary {
            name: scenario.name.clone(),
            outcome: RunStatus::Error(msg),
            best_lap: None,
            errors: 0,
            dir: None,
        },
    }
}

fn summarize(name: &str, report: &RunReport, dir: Option<PathBuf>) -> RunSummary {
    RunSummary {
        name: name.to_owned(),
        outcome: if report.general.passed { RunStatus::Pass } else { RunStatus::Fail },
        best_lap: report.general.best_lap_time,
        errors: report.errors.len(),
        dir,
    }
}

fn print_report(out: &mut dyn Write, report: &RunReport) {
    let g = &report.general;
    let best = g.best_lap_time.map_or("none (no complete lap)".to_owned(), |t| format!("{t:.3} s"));
    let _ = writeln!(out, "best lap time: {best}");
    let _ = writeln!(out, "stop reason: {:?} at {:.3} s", g.stop_reason, g.end_time);
    for e in &report.errors {
        let _ = writeln!(
            out,
            "FAIL {} at t={:.3} s lap {} s={:.1} m: {}",
            e.test, e.time, e.lap, e.s, e.description
        );
    }
    let _ = writeln!(out, "{}", if g.passed { "PASSED" } else { "FAILED" });
}

pub fn cmd_run(scenario_dir: &Path, flags: &RunFlags, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let scenario = match Scenario::load(scenario_dir) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    match simulate(&scenario, flags) {
        Ok((report, dir)) => {
            print_report(out, &report);
            let _ = writeln!(out, "report: {}", dir.join(telemetry::REPORT_MD).display());
            if report.general.passed {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
    }
}

/// Scenario directories under `paths`: a path holding `config.yaml` is a
/// scenario, otherwise its immediate subdirectories are searched. Sorted
/// by path for a deterministic order.
pub fn discover(paths: &[PathBuf]) -> Result<Vec<PathBuf>, String> {
    let mut found = Vec::new();
    for p in paths {
        if p.join("config.yaml").is_file() {
            found.push(p.clone());
            continue;
        }
        let entries = std::fs::read_dir(p).map_err(|e| format!("{}: {e}", p.display()))?;
        for e in entries.flatten() {
            let d = e.path();
            if d.join("config.yaml").is_file() {
                found.push(d);
            }
        }
    }
    found.sort();
    found.dedup();
    Ok(found)
}

pub struct BatchSpec {
    pub paths: Vec<PathBuf>,
    pub tags: Vec<String>,
    pub jobs: Option<usize>,
    pub stop_on_failure: bool,
}

pub fn cmd_batch(spec: &BatchSpec, flags: &RunFlags, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let dirs = match discover(&spec.paths) {
        Ok(d) => d,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let mut scenarios = Vec::new();
    for d in dirs {
        match Scenario::load(&d) {
            Ok(s) => scenarios.push(s),
            Err(e) => {
                let _ = writeln!(err, "error: {}: {e}", d.display());
                return EXIT_USAGE;
            }
        }
    }
    if !spec.tags.is_empty() {
        scenarios.retain(|s| s.config.sim.tags.iter().any(|t| spec.tags.contains(t)));
    }
    if scenarios.is_empty() {
        let _ = writeln!(err, "error: no scenarios selected");
        return EXIT_USAGE;
    }
    let failed = AtomicBool::new(false);
    let run_one = |s: &Scenario| {
        if spec.stop_on_failure && failed.load(Ordering::SeqCst) {
            return RunSummary {
                name: s.name.clone(),
                outcome: RunStatus::Skipped,
                best_lap: None,
                errors: 0,
                dir: None,
            };
        }
        let r = execute(s, flags);
        if r.outcome != RunStatus::Pass {
            failed.store(true, Ordering::SeqCst);
        }
        r
    };
    let jobs = spec.jobs.unwrap_or(0);
    let results: Vec<RunSummary> = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| scenarios.par_iter().map(run_one).collect()),
        Err(_) => scenarios.iter().map(run_one).collect(),
    };
    let mut code = EXIT_PASS;
    for r in &results {
        let _ = writeln!(out, "{}", r.line());
        match &r.outcome {
            RunStatus::Error(msg) => {
                let _ = writeln!(err, "error: {}: {msg}", r.name);
                code = EXIT_USAGE;
            }
            RunStatus::Fail | RunStatus::Skipped if code == EXIT_PASS => code = EXIT_FAIL,
            _ => {}
        }
    }
    let passed = results.iter().filter(|r| r.outcome == RunStatus::Pass).count();
    let _ = writeln!(out, "# {passed}/{} passed", results.len());
    code
}

pub fn cmd_report(run_dir: &Path, full: bool, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match telemetry::regenerate_report(run_dir, full) {
        Ok(r) => {
            print_report(out, &r);
            if r.general.passed {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

/// Parse arguments and dispatch; returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_USAGE;
            }
            let _ = write!(out, "{e}");
            return EXIT_PASS;
        }
    };
    match cli.command {
        Command::Run { scenario, opts } => cmd_run(&scenario, &opts, out, err),
        Command::Batch {
            paths,
            tags,
            jobs,
            stop_on_failure,
            opts,
        } => {
            let spec = BatchSpec {
                paths,
                tags,
                jobs,
                stop_on_failure,
            };
            cmd_batch(&spec, &opts, out, err)
        }
        Command::Report { run_dir, full } => cmd_report(&run_dir, full, out, err),
    }
}
