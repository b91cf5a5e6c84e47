use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Scenario, ScenarioError, ScenarioManager, StopDetector};
use crate::faultinject::install_proxy;
use crate::plant::{init_vehicle, GhostNode, PlantNode};
use crate::simbus::{PacingMode, Payload, RunOutcome, RunTrace, Scheduler, SimClock};
use crate::stack::build_stack;
use crate::telemetry::RunMeta;
use crate::trackgeom::{FrenetPose, RacingLine, TrackModel};

/// Command-line overrides of the first config document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub speedup: Option<f64>,
    pub pacing: Option<PacingMode>,
    pub ground_truth: Option<bool>,
}

pub struct RunOutput {
    pub trace: RunTrace,
    pub outcome: RunOutcome,
    pub meta: RunMeta,
    pub track: Arc<TrackModel>,
    /// Field schema of every topic on the bus.
    pub schemas: BTreeMap<String, Payload>,
    /// Topics routed through the fault proxy.
    pub intercepted: Vec<String>,
}

/// Build every node of a scenario on a fresh scheduler and run it to its
/// end condition.
pub fn run_scenario(scn: &Scenario, opts: &RunOptions) -> Result<RunOutput, ScenarioError> {
    let mut cfg = scn.config.clone();
    if let Some(v) = opts.speedup {
        cfg.sim.speedup = v;
    }
    if let Some(p) = opts.pacing {
        cfg.sim.pacing = p;
    }
    if let Some(gt) = opts.ground_truth {
        cfg.sim.ground_truth_mode = gt;
    }
    cfg.stack.loc_muxer.ground_truth_mode |= cfg.sim.ground_truth_mode;
    cfg.validate()?;
    let seed = opts.seed.or(cfg.sim.seed).unwrap_or(0);

    let track = Arc::new(TrackModel::from_csv(scn.track_path())?);
    let line = Arc::new(RacingLine::from_csv(
        scn.racing_line_path(),
        track.line().capture_distance(),
    )?);
    let init = cfg.sim.init;
    let pose = FrenetPose {
        s: init.s,
        d: init.d,
        mu: init.mu,
    };
    let (state, on_center) = init_vehicle(&track, &line, &pose, init.v0, &cfg.plant.vehicle)?;

    let clock = SimClock::new(cfg.sim.pacing, cfg.sim.speedup)?;
    let mut sched = Scheduler::new(clock);
    sched.register(Box::new(ScenarioManager::new(
        scn.script.clone(),
        track.clone(),
        on_center.s,
    )?))?;
    let plant = PlantNode::new(cfg.plant.clone(), state, seed).map_err(ScenarioError::Invalid)?;
    sched.register(Box::new(plant))?;
    if !cfg.sim.ghosts.is_empty() {
        sched.register(Box::new(GhostNode::new(
            line.clone(),
            cfg.sim.ghosts.clone(),
            cfg.sim.perception_sigma,
            seed,
        )))?;
    }
    for node in build_stack(&cfg.stack, &cfg.plant.vehicle, track.clone(), line) {
        sched.register(node)?;
    }
    sched.register(Box::new(StopDetector::new(cfg.stack.safety.suppress_window)))?;
    let intercepted = install_proxy(&mut sched, &scn.faults, &scn.script.fault_topics()?, seed)?;

    let outcome = sched.run(cfg.sim.max_time, |_| false)?;
    let schemas = sched.schemas().clone();
    let trace = sched.into_trace();
    let meta = RunMeta {
        scenario: scn.name.clone(),
        seed,
        tags: cfg.sim.tags.clone(),
        stop_reason: outcome.reason.clone(),
        end_time: outcome.end_time,
        trace_digest: trace.digest(),
        vehicle: cfg.plant.vehicle.clone(),
        ghosts: cfg.sim.ghosts.clone(),
        report: cfg.report.clone(),
        spawn_s: on_center.s,
        suppress_window: cfg.stack.safety.suppress_window,
    };
    Ok(RunOutput {
        trace,
        outcome,
        meta,
        track,
        schemas,
        intercepted,
    })
}
