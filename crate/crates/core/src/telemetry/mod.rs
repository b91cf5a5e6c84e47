//! Run logs and post-run analysis.
//!
//! A finished run is written as one CSV per topic under `logs/`, plus
//! `run.json` (run metadata) and a copy of the track. The analysis merges
//! the logged topics onto one time grid, segments laps, computes tracking
//! and dynamics metrics, runs the automatic tests and writes `report.json`
//! and `report.md` with plots. Because the analysis reads only those files,
//! [`regenerate_report`] reproduces the report of a run byte for byte.

mod analysis;
mod artifacts;
mod collision;
mod merge;
mod report;
mod table;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{
    detect_overtakes, dynamics_series, episodes, fatal_errors, segment_laps, Frame, GhostTrack, LapSpan,
    DYNAMICS_METRICS, MAX_STANDSTILL, OVERTAKE_END_GAP, OVERTAKE_START_GAP, STANDSTILL,
};
pub use collision::{overlaps, separation, Footprint};
pub use merge::{merge_tables, nearest, MasterTable};
pub use report::{
    DynamicsRecord, General, GhostCollision, GhostSection, LapRecord, Level, OvertakeOutcome, OvertakeRecord,
    RunReport, SafetyStopRecord, TestFailure,
};
pub use table::{extract_tables, file_name, read_csv, read_tables, topic_from_file, write_csv, write_tables, Column, TopicTable};

use crate::plant::{GhostOpponent, VehicleParams, GT_ODOM, GT_OPPONENTS};
use crate::scenario::{ReportConfig, ReportMode};
use crate::simbus::{Payload, RunTrace, StopReason, ERRORS_TOPIC};
use crate::stack::{CTRL_DEBUG, SAFETY_STATE};
use crate::trackgeom::TrackModel;

pub const LOGS_DIR: &str = "logs";
pub const PLOTS_DIR: &str = "plots";
pub const MODULES_DIR: &str = "modules";
pub const RUN_META: &str = "run.json";
pub const TRACK_FILE: &str = "track.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("run metadata: {0}")]
    Meta(String),
    #[error("log has no {0} table")]
    MissingTopic(String),
    #[error("track: {0}")]
    Track(#[from] crate::trackgeom::GeomError),
}

impl TelemetryError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Everything the analysis needs besides the logs, stored as `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scenario: String,
    pub seed: u64,
    pub tags: Vec<String>,
    pub stop_reason: StopReason,
    pub end_time: f64,
    pub trace_digest: String,
    pub vehicle: VehicleParams,
    pub ghosts: Vec<GhostOpponent>,
    pub report: ReportConfig,
    /// Centerline arc length of the spawn point.
    pub spawn_s: f64,
    pub suppress_window: f64,
}

impl RunMeta {
    pub fn read(path: &Path) -> Result<Self, TelemetryError> {
        let text = std::fs::read_to_string(path).map_err(|e| TelemetryError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| TelemetryError::Meta(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), TelemetryError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| TelemetryError::Meta(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| TelemetryError::io(path, e))
    }
}

/// Analysis result with the intermediate frame, for callers that want more
/// than the report.
pub struct Analysis {
    pub report: RunReport,
    pub frame: Frame,
    pub laps: Vec<LapSpan>,
}

/// Merge, segment and test. Pure function of the tables, metadata and
/// track.
pub fn analyze(
    tables: &BTreeMap<String, TopicTable>,
    meta: &RunMeta,
    track: &TrackModel,
) -> Result<Analysis, TelemetryError> {
    let merged = [GT_ODOM, CTRL_DEBUG, SAFETY_STATE, GT_OPPONENTS]
        .iter()
        .filter_map(|t| tables.get(*t));
    let master = merge_tables(merged, meta.report.freq_bound);
    let frame = Frame::build(&master, track, meta)?;
    let (_, spans) = segment_laps(&frame.s, meta.spawn_s, track.total_length());
    let laps = analysis::lap_records(&frame, &spans);
    let dynamics = analysis::dynamics_records(&frame, &spans, meta);
    let outcome = analysis::run_tests(&frame, &dynamics, tables.get(ERRORS_TOPIC), meta);

    let ghosts = (!meta.ghosts.is_empty()).then(|| GhostSection {
        collisions: outcome.collisions.clone(),
        overtakes: detect_overtakes(&frame, meta.vehicle.length, meta.vehicle.width),
    });
    let best_lap_time = laps.iter().filter_map(|l| l.time).reduce(f64::min);
    let general = General {
        scenario: meta.scenario.clone(),
        seed: meta.seed,
        tags: meta.tags.clone(),
        stop_reason: meta.stop_reason.clone(),
        end_time: meta.end_time,
        trace_digest: meta.trace_digest.clone(),
        passed: outcome.failures.is_empty() && !meta.stop_reason.is_failure(),
        tests: meta.report.tests.clone(),
        distance: frame.distance(),
        laps_completed: laps.iter().filter(|l| l.complete).count() as u32,
        best_lap_time,
        max_speed: laps.iter().filter_map(|l| l.max_speed).reduce(f64::max),
        safety_stop: outcome.safety_stop,
    };
    let report = RunReport {
        general,
        errors: outcome.failures,
        laps,
        dynamics: dynamics
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().map(|(r, _)| r).collect()))
            .collect(),
        ghosts,
    };
    Ok(Analysis {
        report,
        frame,
        laps: spans,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), TelemetryError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| TelemetryError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| TelemetryError::io(path, e))
}

/// Write `report.json`, `report.md`, collision plots and, in full mode,
/// the per-module reports.
pub fn render(
    dir: &Path,
    a: &Analysis,
    tables: &BTreeMap<String, TopicTable>,
    meta: &RunMeta,
    track: &TrackModel,
) -> Result<(), TelemetryError> {
    write_file(&dir.join(REPORT_JSON), &a.report.to_json())?;
    write_file(&dir.join(REPORT_MD), &a.report.to_markdown())?;
    if let Some(gs) = &a.report.ghosts {
        for c in &gs.collisions {
            let svg = artifacts::collision_svg(&a.frame, c, track, meta);
            write_file(&dir.join(PLOTS_DIR).join(&c.plot), &svg)?;
        }
    }
    if meta.report.mode == ReportMode::Full {
        for (name, body) in artifacts::module_reports(&a.frame, tables) {
            write_file(&dir.join(MODULES_DIR).join(name), &body)?;
        }
    }
    Ok(())
}

/// Persist a finished run under `dir` and write its report.
pub fn write_run(
    dir: &Path,
    trace: &RunTrace,
    schemas: &BTreeMap<String, Payload>,
    meta: &RunMeta,
    track: &TrackModel,
) -> Result<RunReport, TelemetryError> {
    std::fs::create_dir_all(dir).map_err(|e| TelemetryError::io(dir, e))?;
    let tables = extract_tables(trace, schemas);
    write_tables(&dir.join(LOGS_DIR), &tables)?;
    meta.write(&dir.join(RUN_META))?;
    let track_path = dir.join(TRACK_FILE);
    track.write_csv(&track_path)?;
    // analyse exactly what a later regeneration will read
    let track = TrackModel::from_csv(&track_path)?;
    let a = analyze(&tables, meta, &track)?;
    render(dir, &a, &tables, meta, &track)?;
    Ok(a.report)
}

/// Rebuild the report of a run directory from its logs alone. `full`
/// forces the per-module reports regardless of the stored report mode.
pub fn regenerate_report(dir: &Path, full: bool) -> Result<RunReport, TelemetryError> {
    let tables = read_tables(&dir.join(LOGS_DIR))?;
    let mut meta = RunMeta::read(&dir.join(RUN_META))?;
    if full {
        meta.report.mode = ReportMode::Full;
    }
    let track = TrackModel::from_csv(dir.join(TRACK_FILE))?;
    let a = analyze(&tables, &meta, &track)?;
    render(dir, &a, &tables, &meta, &track)?;
    Ok(a.report)
}
