use std::sync::Arc;

use super::*;
use crate::plant::{
    init_vehicle, GhostNode, GhostOpponent, PlantConfig, PlantNode, CMD_ACTUATION, CMD_STOP, GT_ODOM,
    GT_OPPONENTS,
};
use crate::simbus::{schedule_run, Message, NodeContext, Publication, RunTrace, Severity, SimClock, ERRORS_TOPIC};
use crate::trackgeom::{stadium_points, FrenetPose};

fn oval(width: f64) -> (Arc<TrackModel>, Arc<RacingLine>) {
    let pts = stadium_points(500.0, 250.0, 2.0);
    let n = pts.len();
    let track = TrackModel::new(pts.clone(), vec![width; n], vec![width; n]).unwrap();
    let line = RacingLine::new(pts, vec![75.0; n], 4.0 * width).unwrap();
    (Arc::new(track), Arc::new(line))
}

struct Loop {
    stack: StackConfig,
    plant: PlantConfig,
    width: f64,
    ghosts: Vec<GhostOpponent>,
    extra: Vec<Box<dyn Node>>,
    v0: f64,
}

impl Default for Loop {
    fn default() -> Self {
        Self {
            stack: StackConfig::default(),
            plant: PlantConfig::default(),
            width: 8.0,
            ghosts: Vec::new(),
            extra: Vec::new(),
            v0: 75.0,
        }
    }
}

impl Loop {
    fn run(self, duration: f64) -> RunTrace {
        let (track, line) = oval(self.width);
        let pose = FrenetPose { s: 0.0, d: 0.0, mu: 0.0 };
        let (init, _) = init_vehicle(&track, &line, &pose, self.v0, &self.plant.vehicle).unwrap();
        let vehicle = self.plant.vehicle.clone();
        let mut nodes: Vec<Box<dyn Node>> = vec![Box::new(PlantNode::new(self.plant, init, 7).unwrap())];
        if !self.ghosts.is_empty() {
            nodes.push(Box::new(GhostNode::new(line.clone(), self.ghosts, 0.0, 7)));
        }
        nodes.extend(build_stack(&self.stack, &vehicle, track, line));
        nodes.extend(self.extra);
        schedule_run(nodes, SimClock::default(), duration, |_| false).unwrap().0
    }
}

fn last_after<'a>(trace: &'a RunTrace, topic: &'a str, t: f64) -> impl Iterator<Item = &'a Message> + 'a {
    trace
        .on_topic(topic)
        .filter(move |e| e.delivered_at() >= t)
        .map(|e| e.msg.as_ref())
}

fn gt_speeds(trace: &RunTrace, from: f64) -> Vec<f64> {
    last_after(trace, GT_ODOM, from).map(|m| m.payload.scalar("speed").unwrap()).collect()
}

fn errors(trace: &RunTrace, code: u32) -> Vec<(f64, Severity)> {
    trace
        .on_topic(ERRORS_TOPIC)
        .filter(|e| e.msg.payload.scalar("code") == Some(code as f64))
        .map(|e| {
            let sev = if e.msg.payload.scalar("severity") == Some(1.0) {
                Severity::Fatal
            } else {
                Severity::Warning
            };
            (e.delivered_at(), sev)
        })
        .collect()
}

#[test]
fn odometry_payload_round_trip() {
    let o = Odometry {
        x: 1.0,
        y: -2.0,
        yaw: 0.3,
        pos_cov: [0.01, 0.02],
        vx: 30.0,
        vy: 0.5,
        yaw_rate: 0.1,
        vel_cov: [0.1, 0.2],
        status: [SourceStatus::Ok, SourceStatus::Stale, SourceStatus::Banned, SourceStatus::Ok],
    };
    assert_eq!(Odometry::from_payload(&o.to_payload()), Some(o));
}

#[test]
fn stack_config_set_routes_to_nodes() {
    let mut c = StackConfig::default();
    c.set("planner/ramp_length", "120").unwrap();
    c.set("safety/covariance_threshold", "0.05").unwrap();
    assert_eq!(c.planner.ramp_length, 120.0);
    assert_eq!(c.safety.covariance_threshold, 0.05);
    assert!(c.set("planner", "1").is_err());
    assert!(c.set("nav/x", "1").is_err());
    assert!(c.set("planner/nope", "1").is_err());
}

#[test]
fn muxer_switches_from_truth_to_filter() {
    let trace = Loop::default().run(4.0);
    let odom: Vec<_> = trace.on_topic(LOC_ODOM).collect();
    let gt_stamps: Vec<f64> = trace.on_topic(GT_ODOM).map(|e| e.msg.stamp).collect();
    for e in odom.iter().filter(|e| e.delivered_at() < 2.99) {
        assert!(gt_stamps.contains(&e.msg.stamp));
        assert_eq!(e.msg.payload.vector("pose.covariance"), Some(&[0.0, 0.0][..]));
    }
    let late: Vec<_> = odom.iter().filter(|e| e.delivered_at() >= 3.01).collect();
    assert!(!late.is_empty());
    assert!(late.iter().all(|e| e.msg.payload.vector("pose.covariance").unwrap()[0] > 0.0));
}

#[test]
fn filter_tracks_truth_with_nominal_sensors() {
    let trace = Loop::default().run(8.0);
    let truth: Vec<_> = trace.on_topic(GT_ODOM).map(|e| e.msg.clone()).collect();
    let mut worst: f64 = 0.0;
    for m in last_after(&trace, LOC_ODOM_RAW, 2.0) {
        let o = Odometry::from_payload(&m.payload).unwrap();
        let gt = truth.iter().find(|g| (g.stamp - m.stamp).abs() < 0.006).unwrap();
        let err = (o.x - gt.payload.scalar("x").unwrap()).hypot(o.y - gt.payload.scalar("y").unwrap());
        worst = worst.max(err);
        assert!(o.max_pos_cov() < 0.01, "cov {}", o.max_pos_cov());
    }
    assert!(worst < 0.5, "position error {worst}");
}

#[test]
fn closed_loop_holds_line_and_speed() {
    let trace = Loop::default().run(20.0);
    let speeds = gt_speeds(&trace, 5.0);
    assert!(speeds.iter().all(|v| (v - 75.0).abs() < 1.5), "{:?}", speeds.iter().cloned().fold(0.0, f64::max));
    let lat: f64 = last_after(&trace, CTRL_DEBUG, 5.0)
        .map(|m| m.payload.scalar("lateral_error").unwrap().abs())
        .fold(0.0, f64::max);
    assert!(lat < 1.0, "lateral error {lat}");
    assert!(errors(&trace, codes::SAFETY_STOP).is_empty());
}

#[test]
fn controller_without_warm_start_starts_from_zero_force() {
    let mut l = Loop::default();
    l.stack.controller.warm_start = false;
    let trace = l.run(1.0);
    let first = trace.on_topic(CMD_ACTUATION).next().unwrap();
    assert!(first.msg.payload.scalar("force").unwrap() < 100.0);
}

#[test]
fn unauthorized_mission_brings_car_to_rest() {
    let mut l = Loop::default();
    l.stack.mission.spawn_on_track = false;
    l.v0 = 20.0;
    let trace = l.run(10.0);
    assert!(gt_speeds(&trace, 9.0).iter().all(|v| *v < 0.1));
}

#[test]
fn speed_cap_limits_target() {
    let mut l = Loop::default();
    l.stack.mission.max_speed = 50.0;
    let trace = l.run(15.0);
    assert!(gt_speeds(&trace, 12.0).iter().all(|v| (v - 50.0).abs() < 1.0));
}

fn ghost(s0: f64, speed: f64) -> GhostOpponent {
    GhostOpponent {
        id: "g0".into(),
        s0,
        speed,
        d: 0.0,
        length: 4.9,
        width: 1.9,
    }
}

fn min_separation(trace: &RunTrace) -> f64 {
    let ghosts: Vec<_> = trace.on_topic(GT_OPPONENTS).map(|e| e.msg.clone()).collect();
    let mut best = f64::INFINITY;
    for e in trace.on_topic(GT_ODOM) {
        let Some(g) = ghosts.iter().find(|g| g.stamp == e.msg.stamp) else { continue };
        let (gx, gy) = (g.payload.vector("x").unwrap()[0], g.payload.vector("y").unwrap()[0]);
        let d = (e.msg.payload.scalar("x").unwrap() - gx).hypot(e.msg.payload.scalar("y").unwrap() - gy);
        best = best.min(d);
    }
    best
}

fn modes(trace: &RunTrace) -> Vec<f64> {
    let mut m: Vec<f64> = trace.on_topic(PLAN_TRAJECTORY).map(|e| e.msg.payload.scalar("mode").unwrap()).collect();
    m.dedup();
    m
}

#[test]
fn planner_overtakes_slower_opponent() {
    let mut l = Loop::default();
    l.ghosts = vec![ghost(100.0, 61.11)];
    let trace = l.run(14.0);
    assert!(modes(&trace).contains(&1.0));
    let sep = min_separation(&trace);
    assert!(sep > 2.5, "separation {sep}");
    let last = trace.on_topic(PLAN_TRAJECTORY).last().unwrap();
    assert_eq!(last.msg.payload.scalar("mode"), Some(0.0));
    assert!(errors(&trace, codes::PLANNER_NO_OFFSET).is_empty());
}

#[test]
fn planner_follows_when_track_is_too_narrow() {
    let mut l = Loop::default();
    l.width = 2.5;
    l.ghosts = vec![ghost(100.0, 61.11)];
    let trace = l.run(14.0);
    assert!(modes(&trace).contains(&2.0));
    assert!(!modes(&trace).contains(&1.0));
    let warn = errors(&trace, codes::PLANNER_NO_OFFSET);
    assert_eq!(warn.len(), 1);
    assert_eq!(warn[0].1, Severity::Warning);
    assert!(min_separation(&trace) > 10.0);
}

/// Raises fatal errors with the given codes at fixed times.
struct Raiser(Vec<(f64, u32)>);

impl Node for Raiser {
    fn name(&self) -> &str {
        "raiser"
    }
    fn period(&self) -> f64 {
        0.01
    }
    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        match self.0.first() {
            Some(&(at, code)) if ctx.now() >= at => {
                self.0.remove(0);
                Err(NodeError::fatal(code, "injected"))
            }
            _ => Ok(()),
        }
    }
}

fn stop_latched(trace: &RunTrace) -> Option<(f64, bool)> {
    trace
        .on_topic(SAFETY_STATE)
        .find(|e| e.msg.payload.scalar("stopped") == Some(1.0))
        .map(|e| (e.delivered_at(), e.msg.payload.scalar("emergency") == Some(1.0)))
}

#[test]
fn safety_ignores_errors_inside_window() {
    let mut l = Loop::default();
    l.extra.push(Box::new(Raiser(vec![(1.0, 99)])));
    let trace = l.run(5.0);
    assert_eq!(stop_latched(&trace), None);
    assert_eq!(trace.on_topic(CMD_STOP).count(), 0);
}

#[test]
fn safety_latches_soft_stop_on_fatal_error() {
    let mut l = Loop::default();
    l.v0 = 30.0;
    l.extra.push(Box::new(Raiser(vec![(4.0, 99)])));
    let trace = l.run(10.0);
    let (t, emergency) = stop_latched(&trace).unwrap();
    assert!((t - 4.0).abs() < 0.02, "{t}");
    assert!(!emergency);
    assert_eq!(errors(&trace, codes::SAFETY_STOP).len(), 1);
    assert!(gt_speeds(&trace, 9.5).iter().all(|v| *v < 0.05));
    let after: Vec<f64> = last_after(&trace, CMD_ACTUATION, 4.02)
        .map(|m| m.payload.scalar("force").unwrap())
        .collect();
    assert!(after.iter().all(|f| *f <= 0.0));
}

#[test]
fn watchdog_error_escalates_to_emergency() {
    let mut l = Loop::default();
    l.v0 = 30.0;
    l.extra.push(Box::new(Raiser(vec![(4.0, 99), (4.5, codes::LOC_WATCHDOG)])));
    let trace = l.run(6.0);
    let states: Vec<f64> = last_after(&trace, SAFETY_STATE, 4.6)
        .map(|m| m.payload.scalar("emergency").unwrap())
        .collect();
    assert!(states.iter().all(|e| *e == 1.0));
    assert_eq!(errors(&trace, codes::SAFETY_STOP).len(), 2);
    let steer: Vec<f64> = last_after(&trace, CMD_ACTUATION, 4.52)
        .map(|m| m.payload.scalar("steer").unwrap())
        .collect();
    assert!(steer.iter().all(|s| *s == 0.0));
}

#[test]
fn lost_position_sources_grow_covariance() {
    let every = |dt: f64, until: f64| (1..).map(|k| k as f64 * dt).take_while(|t| *t <= until).collect();
    let imu = Payload::new()
        .with("accel", [0.0, 0.0])
        .with("gyro", 0.0)
        .with("yaw", 0.0);
    let gps = Payload::new()
        .with("position", [0.0, 0.0])
        .with("covariance", [0.03f64.powi(2); 2])
        .with("satellites", 18.0);
    let nodes: Vec<Box<dyn Node>> = vec![
        Box::new(Inject { name: "imu", times: every(0.01, 6.0), topic: "/imu/0/data", payload: imu }),
        Box::new(Inject { name: "gps", times: every(0.1, 1.5), topic: crate::plant::GPS_FIX, payload: gps }),
        Box::new(LocalizationNode::new(LocalizationParams::default())),
    ];
    let (trace, _) = schedule_run(nodes, SimClock::default(), 6.0, |_| false).unwrap();
    let cov_at = |t: f64| {
        let m = last_after(&trace, LOC_ODOM_RAW, t).next().unwrap();
        Odometry::from_payload(&m.payload).unwrap()
    };
    assert!(cov_at(1.45).max_pos_cov() < 0.005);
    let covs: Vec<f64> = last_after(&trace, LOC_ODOM_RAW, 1.55)
        .map(|m| Odometry::from_payload(&m.payload).unwrap().max_pos_cov())
        .collect();
    assert!(covs.windows(2).all(|w| w[1] >= w[0]));
    let crossing = last_after(&trace, LOC_ODOM_RAW, 1.5)
        .find(|m| Odometry::from_payload(&m.payload).unwrap().max_pos_cov() > 0.03)
        .map(|m| m.stamp)
        .unwrap();
    assert!((2.0..5.0).contains(&crossing), "{crossing}");
    assert_eq!(cov_at(2.0).status[0], SourceStatus::Stale);
    assert_eq!(cov_at(2.0).status[2], SourceStatus::Ok);
}

/// Publishes a canned payload at fixed times, for driving a node in isolation.
struct Inject {
    name: &'static str,
    times: Vec<f64>,
    topic: &'static str,
    payload: Payload,
}

impl Node for Inject {
    fn name(&self) -> &str {
        self.name
    }
    fn period(&self) -> f64 {
        0.01
    }
    fn publications(&self) -> Vec<Publication> {
        vec![Publication::new(self.topic, self.payload.clone())]
    }
    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        if self.times.first().is_some_and(|t| ctx.now() >= *t) {
            self.times.remove(0);
            ctx.publish(self.topic, self.payload.clone());
        }
        Ok(())
    }
}

#[test]
fn safety_trips_on_covariance_after_window_only() {
    let mut bad = Odometry::default();
    bad.pos_cov = [0.5, 0.5];
    let nodes: Vec<Box<dyn Node>> = vec![
        Box::new(Inject {
            name: "odom",
            times: vec![1.0, 3.5],
            topic: LOC_ODOM,
            payload: bad.to_payload(),
        }),
        Box::new(SafetyNode::new(SafetyParams::default())),
    ];
    let (trace, _) = schedule_run(nodes, SimClock::default(), 4.0, |_| false).unwrap();
    let (t, emergency) = stop_latched(&trace).unwrap();
    assert!((t - 3.5).abs() < 0.015, "{t}");
    assert!(!emergency);
    let first_stop = trace.on_topic(CMD_STOP).next().unwrap();
    assert_eq!(first_stop.msg.payload.scalar("brake"), Some(8000.0));
}

