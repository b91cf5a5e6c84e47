//! Scenario directories, the scenario manager and stop detector nodes, and
//! run orchestration.
//!
//! A scenario directory holds `config.yaml` (two documents: simulation
//! setup plus parameter overrides, then report settings), `scenario.yaml`
//! (command groups fired at (lap, s) positions) and optionally
//! `faults.yaml`.

mod config;
mod manager;
mod run;

use thiserror::Error;

pub use config::{
    CommandGroup, EndCondition, InitConfig, ReportConfig, ReportMode, Scenario, ScenarioConfig, ScenarioScript,
    ScriptCommand, SimConfig, Threshold, TEST_NAMES,
};
pub use manager::{command_payload, LapCounter, ScenarioManager, StopDetector, FIRED, HEARTBEAT, HEARTBEAT_PERIOD};
pub use run::{run_scenario, RunOptions, RunOutput};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("missing scenario file or directory: {0}")]
    Missing(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("track: {0}")]
    Track(#[from] crate::trackgeom::GeomError),
    #[error("vehicle spawn: {0}")]
    Spawn(#[from] crate::plant::InitError),
    #[error("fault configuration: {0}")]
    Faults(#[from] crate::faultinject::FaultError),
    #[error("bus: {0}")]
    Bus(#[from] crate::simbus::BusError),
}

#[cfg(test)]
mod tests;
