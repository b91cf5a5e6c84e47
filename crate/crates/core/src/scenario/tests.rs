use std::sync::Arc;

use super::*;
use crate::plant::{gt_payload, VehicleState, GT_ODOM};
use crate::simbus::{
    codes, schedule_run, Node, NodeContext, NodeError, PacingMode, Publication, RunTrace, SimClock, StopReason,
    COMMANDS_TOPIC, ERRORS_TOPIC,
};
use crate::trackgeom::{stadium_points, FrenetPose, RacingLine, TrackModel};

fn small_oval() -> Arc<TrackModel> {
    let pts = stadium_points(100.0, 50.0, 1.0);
    let n = pts.len();
    Arc::new(TrackModel::new(pts, vec![8.0; n], vec![8.0; n]).unwrap())
}

/// Publishes ground truth for a car moving along the centerline at `v`
/// from `s0`, decelerating at `decel` from `brake_at`.
struct FakeCar {
    track: Arc<TrackModel>,
    s: f64,
    v: f64,
    brake_at: f64,
    decel: f64,
}

impl FakeCar {
    fn new(track: Arc<TrackModel>, s0: f64, v: f64) -> Self {
        Self {
            track,
            s: s0,
            v,
            brake_at: f64::INFINITY,
            decel: 0.0,
        }
    }
}

impl Node for FakeCar {
    fn name(&self) -> &str {
        "fake_car"
    }

    fn period(&self) -> f64 {
        0.01
    }

    fn publications(&self) -> Vec<Publication> {
        vec![Publication::new(GT_ODOM, gt_payload(&VehicleState::default()))]
    }

    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        if ctx.now() >= self.brake_at {
            self.v = (self.v - self.decel * 0.01).max(0.0);
        }
        let (x, y, yaw) = self.track.frenet_to_cartesian(&FrenetPose {
            s: self.s,
            d: 0.0,
            mu: 0.0,
        });
        let st = VehicleState {
            x,
            y,
            yaw,
            vx: self.v,
            ..VehicleState::default()
        };
        ctx.publish(GT_ODOM, gt_payload(&st));
        self.s = (self.s + self.v * 0.01).rem_euclid(self.track.total_length());
        Ok(())
    }
}

/// Raises one error at a fixed time.
struct Raiser {
    at: f64,
    fatal: bool,
    code: u32,
    done: bool,
}

impl Node for Raiser {
    fn name(&self) -> &str {
        "raiser"
    }

    fn period(&self) -> f64 {
        0.01
    }

    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        if self.done || ctx.now() < self.at {
            return Ok(());
        }
        self.done = true;
        Err(if self.fatal {
            NodeError::fatal(self.code, "raised")
        } else {
            NodeError::warning(self.code, "raised")
        })
    }
}

fn fired(trace: &RunTrace) -> Vec<(usize, f64, u32)> {
    trace
        .on_topic(FIRED)
        .map(|e| {
            let p = &e.msg.payload;
            (
                p.scalar("group").unwrap() as usize,
                e.msg.stamp,
                p.scalar("lap").unwrap() as u32,
            )
        })
        .collect()
}

fn run(nodes: Vec<Box<dyn Node>>, max_time: f64) -> (RunTrace, crate::simbus::RunOutcome) {
    let clock = SimClock::new(PacingMode::AsFastAsPossible, 1.0).unwrap();
    schedule_run(nodes, clock, max_time, |_| false).unwrap()
}

#[test]
fn lap_counter_counts_forward_seam_crossings() {
    let mut c = LapCounter::new(100.0, 90.0);
    assert_eq!(c.lap(), 1);
    assert!(!c.update(95.0));
    assert!(c.update(2.0));
    assert_eq!(c.lap(), 2);
    // backward jitter across the seam and forward again
    assert!(!c.update(99.5));
    assert!(!c.update(1.0));
    assert_eq!(c.lap(), 2);
    for s in [30.0, 60.0, 90.0, 0.5] {
        c.update(s);
    }
    assert_eq!(c.lap(), 3);
}

#[test]
fn group_behind_spawn_waits_for_next_lap() {
    let mut c = LapCounter::new(100.0, 50.0);
    c.update(60.0);
    assert!(!c.reached(1, 40.0));
    assert!(c.reached(1, 55.0));
    c.update(99.0);
    assert!(!c.reached(1, 40.0));
    c.update(1.0);
    assert!(c.reached(1, 40.0));
    assert!(!c.reached(2, 40.0));
    c.update(41.0);
    assert!(c.reached(2, 40.0));
}

const SCRIPT: &str = r#"
end:
  after_lap: 2
groups:
  - lap: 2
    s: 200
    parameters:
      - target: controller/kp
        value: 2500
  - lap: 1
    s: 300
    parameters:
      - target: mission/max_speed
        value: 50
  - lap: 1
    s: 50
    parameters:
      - target: planner/follow_distance
        value: 40
"#;

#[test]
fn script_groups_sort_and_resolve() {
    let s = ScenarioScript::from_yaml(SCRIPT).unwrap();
    let order: Vec<(u32, f64)> = s.groups.iter().map(|g| (g.lap, g.s)).collect();
    assert_eq!(order, [(1, 50.0), (1, 300.0), (2, 200.0)]);
    assert_eq!(s.final_lap(), 2);
    let (node, param, value) = s.groups[1].parameters[0].resolve().unwrap();
    assert_eq!((node.as_str(), param.as_str(), value.as_str()), ("mission", "max_speed", "50"));
    let bad = "groups:\n  - lap: 1\n    s: 0\n    parameters:\n      - target: nonsense\n        value: 1\n";
    assert!(ScenarioScript::from_yaml(bad).is_err());
    assert!(ScenarioScript::from_yaml("groups:\n  - lap: 0\n    s: 0\n").is_err());
    assert_eq!(ScenarioScript::from_yaml("").unwrap().final_lap(), 1);
}

#[test]
fn unknown_parameter_is_a_startup_error_naming_the_path() {
    let text = "sim:\n  track: t.csv\n  racing_line: l.csv\nparams:\n  controlr/gain: 3\n";
    let err = ScenarioConfig::from_yaml(text).unwrap_err();
    assert!(matches!(err, ScenarioError::UnknownParam(_)));
    assert!(err.to_string().contains("controlr/gain"), "{err}");
    let text = "sim:\n  track: t.csv\n  racing_line: l.csv\nparams:\n  controller/no_such_gain: 3\n";
    assert!(ScenarioConfig::from_yaml(text).unwrap_err().to_string().contains("controller/no_such_gain"));
}

#[test]
fn config_documents_patch_stack_plant_and_report() {
    let text = "\
sim:
  track: t.csv
  racing_line: l.csv
  seed: 7
  init: {s: 10, d: 1, mu: 0, v0: 30}
params:
  controller/kp: 2500
  plant/vehicle.mass: 900
---
tests: [track_boundaries]
thresholds:
  lateral_error: {yellow: 0.5, red: 2}
";
    let cfg = ScenarioConfig::from_yaml(text).unwrap();
    assert_eq!(cfg.sim.seed, Some(7));
    assert_eq!(cfg.sim.init.v0, 30.0);
    assert_eq!(cfg.stack.controller.kp, 2500.0);
    assert_eq!(cfg.plant.vehicle.mass, 900.0);
    assert!(cfg.report.enabled("track_boundaries"));
    assert!(!cfg.report.enabled("car_started"));
    assert_eq!(cfg.report.threshold("lateral_error").unwrap().red, 2.0);
    assert_eq!(cfg.report.threshold("understeer").unwrap().red, 6.0);
    assert!(ScenarioConfig::from_yaml("---\ntests: [bogus]\n").is_err());
    assert!(ScenarioConfig::from_yaml("sim: {speedup: 0.5}\n").is_err());
    assert!(ScenarioConfig::from_yaml("a: 1\n---\n---\n").is_err());
}

#[test]
fn manager_fires_groups_in_lap_order_and_heartbeat_ends_the_run() {
    let track = small_oval();
    let l = track.total_length();
    let script = ScenarioScript::from_yaml(SCRIPT).unwrap();
    let v = 100.0;
    let spawn = 100.0;
    let nodes: Vec<Box<dyn Node>> = vec![
        Box::new(FakeCar::new(track.clone(), spawn, v)),
        Box::new(ScenarioManager::new(script, track.clone(), spawn).unwrap()),
        Box::new(StopDetector::new(3.0)),
    ];
    let (trace, out) = run(nodes, 60.0);
    let f = fired(&trace);
    assert_eq!(f.iter().map(|x| x.0).collect::<Vec<_>>(), [1, 0, 2]);
    let lap2 = (l - spawn) / v;
    // each group fires on the first ground-truth sample past its point
    let expect = [(300.0 - spawn) / v, lap2, lap2 + 200.0 / v];
    for ((_, t, _), e) in f.iter().zip(expect) {
        assert!(*t >= e - 1e-9 && *t <= e + 0.011 + 1e-9, "fired at {t}, expected {e}");
    }
    assert_eq!(f.iter().map(|x| x.2).collect::<Vec<_>>(), [1, 2, 2]);
    // commands went out on the command topic; unknown nodes warn
    let cmds: Vec<String> = trace
        .on_topic(COMMANDS_TOPIC)
        .map(|e| e.msg.payload.text("target").unwrap().to_owned())
        .collect();
    assert_eq!(cmds, ["mission", "planner", "controller"]);
    let warnings = trace
        .on_topic(ERRORS_TOPIC)
        .filter(|e| e.msg.payload.scalar("code") == Some(codes::PARAM as f64))
        .count();
    assert_eq!(warnings, 3);

    // lap 3 begins at lap2 + l / v; heartbeat lasts one more second, then
    // three periods pass before the detector fires
    assert_eq!(out.reason, StopReason::ScenarioComplete);
    let done = lap2 + l / v;
    let last_hb = trace.on_topic(HEARTBEAT).last().unwrap().msg.stamp;
    assert!(last_hb >= done + 1.0 - 0.11 && last_hb <= done + 1.0 + 0.11, "{last_hb} vs {done}");
    assert!(out.end_time > last_hb + 3.0 * HEARTBEAT_PERIOD);
    assert!(out.end_time <= last_hb + 3.0 * HEARTBEAT_PERIOD + 0.011);
}

#[test]
fn after_time_end_condition() {
    let track = small_oval();
    let script = ScenarioScript::from_yaml("end: {after_time: 2.0, grace: 0.5}\n").unwrap();
    let nodes: Vec<Box<dyn Node>> = vec![
        Box::new(FakeCar::new(track.clone(), 0.0, 10.0)),
        Box::new(ScenarioManager::new(script, track, 0.0).unwrap()),
        Box::new(StopDetector::new(3.0)),
    ];
    let (_, out) = run(nodes, 60.0);
    assert_eq!(out.reason, StopReason::ScenarioComplete);
    assert!(out.end_time > 2.5 && out.end_time < 3.0, "{}", out.end_time);
}

fn detector_run(raise_at: f64, fatal: bool) -> crate::simbus::RunOutcome {
    let track = small_oval();
    let script = ScenarioScript::from_yaml("end: {after_time: 30.0}\n").unwrap();
    let mut car = FakeCar::new(track.clone(), 0.0, 20.0);
    car.brake_at = raise_at;
    car.decel = 10.0;
    let nodes: Vec<Box<dyn Node>> = vec![
        Box::new(FakeCar { ..car }),
        Box::new(ScenarioManager::new(script, track, 0.0).unwrap()),
        Box::new(Raiser {
            at: raise_at,
            fatal,
            code: codes::LOC_WATCHDOG,
            done: false,
        }),
        Box::new(StopDetector::new(3.0)),
    ];
    run(nodes, 60.0).1
}

#[test]
fn stop_detector_ends_run_when_car_halts_after_fatal_error() {
    let out = detector_run(5.0, true);
    assert_eq!(out.reason, StopReason::StackStopCompleted);
    // 20 m/s at 10 m/s² reaches 0.5 m/s after 1.95 s
    assert!((out.end_time - 6.96).abs() < 0.03, "{}", out.end_time);
}

#[test]
fn stop_detector_ignores_warnings_and_suppressed_errors() {
    // the car still halts, but nothing fatal was seen after the window
    let out = detector_run(5.0, false);
    assert_eq!(out.reason, StopReason::ScenarioComplete);
    let out = detector_run(1.0, true);
    assert_eq!(out.reason, StopReason::ScenarioComplete);
}

#[test]
fn max_time_is_a_failed_run() {
    let track = small_oval();
    let script = ScenarioScript::from_yaml("end: {after_time: 100.0}\n").unwrap();
    let nodes: Vec<Box<dyn Node>> = vec![
        Box::new(FakeCar::new(track.clone(), 0.0, 10.0)),
        Box::new(ScenarioManager::new(script, track, 0.0).unwrap()),
        Box::new(StopDetector::new(3.0)),
    ];
    let (_, out) = run(nodes, 5.0);
    assert_eq!(out.reason, StopReason::Timeout);
    assert!(out.reason.is_failure());
}

/// Write a small oval scenario into `dir`.
fn write_scenario(dir: &std::path::Path, script: &str, extra_sim: &str) {
    let pts = stadium_points(300.0, 150.0, 2.0);
    let n = pts.len();
    let track = TrackModel::new(pts.clone(), vec![8.0; n], vec![8.0; n]).unwrap();
    track.write_csv(dir.join("track.csv")).unwrap();
    let line = RacingLine::new(pts, vec![50.0; n], 32.0).unwrap();
    line.write_csv(dir.join("line.csv")).unwrap();
    let config = format!(
        "sim:\n  track: track.csv\n  racing_line: line.csv\n  init: {{s: 0, d: 0, mu: 0, v0: 50}}\n  max_time: 120\n{extra_sim}"
    );
    std::fs::write(dir.join("config.yaml"), config).unwrap();
    std::fs::write(dir.join("scenario.yaml"), script).unwrap();
}

#[test]
fn minimal_scenario_runs_to_completion() {
    let dir = tempfile::tempdir().unwrap();
    let scn_dir = dir.path().join("mini");
    std::fs::create_dir(&scn_dir).unwrap();
    write_scenario(
        &scn_dir,
        "end: {after_time: 6.0, grace: 0.5}\ngroups:\n  - lap: 1\n    s: 100\n    parameters:\n      - target: mission/max_speed\n        value: 40\n",
        "  seed: 3\n",
    );
    let scn = Scenario::load(&scn_dir).unwrap();
    assert_eq!(scn.name, "mini");
    let out = run_scenario(&scn, &RunOptions::default()).unwrap();
    assert_eq!(out.outcome.reason, StopReason::ScenarioComplete);
    assert_eq!(out.meta.seed, 3);
    assert!(out.intercepted.is_empty());
    assert!(out.schemas.contains_key(GT_ODOM));
    // the cap reached the mission node without a parameter warning
    let param_warnings = out
        .trace
        .on_topic(ERRORS_TOPIC)
        .filter(|e| e.msg.payload.scalar("code") == Some(codes::PARAM as f64))
        .count();
    assert_eq!(param_warnings, 0);
    let v_end = out.trace.on_topic(GT_ODOM).last().unwrap().msg.payload.scalar("speed").unwrap();
    assert!(v_end < 44.0, "speed {v_end}");

    // same seed, same trace; the command-line seed overrides the config
    let again = run_scenario(&scn, &RunOptions::default()).unwrap();
    assert_eq!(again.meta.trace_digest, out.meta.trace_digest);
    let other = run_scenario(
        &scn,
        &RunOptions {
            seed: Some(4),
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert_eq!(other.meta.seed, 4);
    assert_ne!(other.meta.trace_digest, out.meta.trace_digest);
}

#[test]
fn missing_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(Scenario::load(dir.path().join("nope")), Err(ScenarioError::Missing(_))));
    std::fs::write(dir.path().join("config.yaml"), "sim: {}\n").unwrap();
    let err = Scenario::load(dir.path()).unwrap_err();
    assert!(err.to_string().contains("scenario.yaml"), "{err}");
}
