use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::simbus::{schedule_run, SimClock, StopReason};
use crate::trackgeom::{stadium_points, FrenetPose, RacingLine, TrackModel};

fn oval() -> (TrackModel, RacingLine) {
    let pts = stadium_points(500.0, 250.0, 2.0);
    let n = pts.len();
    let track = TrackModel::new(pts.clone(), vec![8.0; n], vec![8.0; n]).unwrap();
    let line = RacingLine::new(pts, vec![75.0; n], 32.0).unwrap();
    (track, line)
}

#[test]
fn rest_with_zero_commands_stays_put() {
    let p = VehicleParams::default();
    let s0 = VehicleState::default();
    let mut s = s0;
    for _ in 0..1000 {
        s = step(&s, &p, 0.0, 0.0, 0.001);
    }
    assert_eq!(s, s0);
}

#[test]
fn steady_state_yaw_rate_matches_linear_model() {
    let p = VehicleParams::default();
    let (v, delta) = (30.0, 0.02);
    // closed-form steady cornering of the linear single-track model
    let l = p.lf + p.lr;
    let k = p.mass / (l * l) * (p.lr / p.cornering_stiffness_front - p.lf / p.cornering_stiffness_rear);
    let expected = v * delta / (l * (1.0 + k * v * v));

    let mut s = VehicleState {
        vx: v,
        drive_force: p.drag_coeff * v * v,
        ..Default::default()
    };
    for _ in 0..20_000 {
        let force = p.drag_coeff * s.vx * s.vx + 5000.0 * (v - s.vx);
        s = step(&s, &p, delta, force, 0.001);
    }
    assert!((s.vx - v).abs() < 0.05);
    let rel = (s.yaw_rate - expected).abs() / expected;
    assert!(rel < 0.02, "yaw rate {} vs {expected} ({rel})", s.yaw_rate);
}

#[test]
fn full_throttle_reaches_drag_limited_speed() {
    let p = VehicleParams::default();
    let terminal = (p.force_max / p.drag_coeff).sqrt();
    let mut s = VehicleState::default();
    for _ in 0..90_000 {
        s = step(&s, &p, 0.0, p.force_max, 0.001);
    }
    assert!((s.vx - terminal).abs() / terminal < 0.005, "{} vs {terminal}", s.vx);
}

#[test]
fn braking_never_reverses() {
    let p = VehicleParams::default();
    let mut s = VehicleState {
        vx: 3.0,
        ..Default::default()
    };
    for _ in 0..5000 {
        s = step(&s, &p, 0.0, -p.brake_force_max, 0.001);
    }
    assert_eq!(s.vx, 0.0);
}

proptest! {
    #[test]
    fn coasting_never_gains_speed(v0 in 0.0..80.0f64, steer in -0.3..0.3f64) {
        let p = VehicleParams::default();
        let mut s = VehicleState { vx: v0, ..Default::default() };
        let mut last = s.speed();
        for _ in 0..3000 {
            s = step(&s, &p, steer, 0.0, 0.001);
            prop_assert!(s.speed() <= last + 1e-9, "{} > {}", s.speed(), last);
            last = s.speed();
        }
    }
}

#[test]
fn spawn_at_rest_and_at_speed() {
    let (track, line) = oval();
    let p = VehicleParams::default();
    let (s, _) = init_vehicle(&track, &line, &FrenetPose::default(), 0.0, &p).unwrap();
    assert_eq!((s.vx, s.vy, s.yaw_rate), (0.0, 0.0, 0.0));

    // middle of the first bend
    let s_arc = 500.0 + std::f64::consts::PI * 250.0 / 2.0;
    let (s, on_center) = init_vehicle(&track, &line, &FrenetPose { s: s_arc, d: 0.0, mu: 0.0 }, 75.0, &p).unwrap();
    assert!((s.yaw_rate - 75.0 / 250.0).abs() < 0.003, "{}", s.yaw_rate);
    assert!((s.steer - (p.wheelbase() / 250.0).atan()).abs() < 1e-4);
    assert!(on_center.d.abs() < 1e-9);

    let off = FrenetPose { s: 100.0, d: 9.0, mu: 0.0 };
    assert!(matches!(init_vehicle(&track, &line, &off, 10.0, &p), Err(InitError::OffTrack(_))));
}

#[test]
fn ideal_sensors_report_truth() {
    let mut bank = SensorBank::new(SensorSuite::ideal(), 3);
    let s = VehicleState {
        x: 1.0,
        y: 2.0,
        yaw: 0.3,
        vx: 20.0,
        yaw_rate: 0.1,
        ax: 0.5,
        ay: 2.0,
        ..Default::default()
    };
    assert_eq!(bank.gps(&s).vector("position"), Some(&[1.0, 2.0][..]));
    assert_eq!(bank.wheel(&s).scalar("speed"), Some(20.0));
    let imu = bank.imu(1, &s);
    assert_eq!(imu.scalar("gyro"), Some(0.1));
    assert_eq!(imu.vector("accel"), Some(&[0.5, 2.0][..]));
    assert_eq!(bank.lio(0.0, &s).scalar("yaw"), Some(0.3));
}

#[test]
fn gps_noise_has_configured_spread() {
    let mut suite = SensorSuite::ideal();
    suite.gps.sigma = 0.5;
    let mut bank = SensorBank::new(suite, 42);
    let s = VehicleState::default();
    let xs: Vec<f64> = (0..10_000).map(|_| bank.gps(&s).vector("position").unwrap()[0]).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    assert!((var.sqrt() - 0.5).abs() / 0.5 < 0.05, "std {}", var.sqrt());
}

#[test]
fn imus_draw_independent_noise() {
    let mut bank = SensorBank::new(SensorSuite::default(), 9);
    let s = VehicleState::default();
    let a: Vec<f64> = (0..5).map(|_| bank.imu(0, &s).scalar("gyro").unwrap()).collect();
    let b: Vec<f64> = (0..5).map(|_| bank.imu(1, &s).scalar("gyro").unwrap()).collect();
    assert_ne!(a, b);
    let mut again = SensorBank::new(SensorSuite::default(), 9);
    let a2: Vec<f64> = (0..5).map(|_| again.imu(0, &s).scalar("gyro").unwrap()).collect();
    assert_eq!(a, a2);
}

#[test]
fn lio_latency_reports_old_pose() {
    let mut suite = SensorSuite::ideal();
    suite.lio.latency = 0.5;
    let mut bank = SensorBank::new(suite, 0);
    for k in 0..=1000 {
        let t = k as f64 * 0.001;
        bank.record(t, &VehicleState { x: t, ..Default::default() });
    }
    let now = VehicleState { x: 1.0, ..Default::default() };
    let x = bank.lio(1.0, &now).vector("position").unwrap()[0];
    assert!((x - 0.5).abs() < 1e-9, "{x}");
}

fn ghost(id: &str, s0: f64, speed: f64) -> GhostOpponent {
    GhostOpponent {
        id: id.into(),
        s0,
        speed,
        d: 0.0,
        length: 4.9,
        width: 1.9,
    }
}

#[test]
fn ghosts_advance_wrap_and_stand_still() {
    let (_, line) = oval();
    let line = Arc::new(line);
    let l = line.line().total_length();
    let node = GhostNode::new(
        line.clone(),
        vec![ghost("fast", 100.0, 220.0 / 3.6), ghost("parked", 50.0, 0.0), ghost("lapper", l - 10.0, 20.0)],
        0.0,
        1,
    );
    let (trace, _) = schedule_run(vec![Box::new(node)], SimClock::default(), 1.005, |_| false).unwrap();
    let msgs: Vec<_> = trace.on_topic(GT_OPPONENTS).collect();
    // 101 samples: t = 0 .. 1.0 s
    assert_eq!(msgs.len(), 101);
    let s_at = |i: usize, g: usize| msgs[i].msg.payload.vector("s").unwrap()[g];
    assert!((s_at(100, 0) - s_at(0, 0) - 61.111_111).abs() < 1e-3);
    assert_eq!(s_at(100, 1), 50.0);
    assert!((s_at(100, 2) - 10.0).abs() < 1e-6);
    assert_eq!(msgs[100].msg.payload.vector("lap").unwrap()[2], 1.0);
    assert_eq!(msgs[40].msg.payload.vector("lap").unwrap()[2], 0.0);
    assert_eq!(trace.on_topic(PERCEPTION_OPPONENTS).count(), 21);
}

#[test]
fn ghost_speed_command() {
    let (_, line) = oval();
    let mut node = GhostNode::new(Arc::new(line), vec![ghost("g0", 0.0, 10.0), ghost("g1", 0.0, 10.0)], 0.0, 0);
    node.apply_param("g1.speed", "30").unwrap();
    assert!(node.apply_param("g9.speed", "30").is_err());
    assert!(node.apply_param("color", "1").is_err());
    node.apply_param("speed", "5").unwrap();
}

#[test]
fn plant_node_publishes_at_sensor_rates() {
    let node = PlantNode::new(PlantConfig::default(), VehicleState::default(), 0).unwrap();
    let (trace, _) = schedule_run(vec![Box::new(node)], SimClock::default(), 1.0, |_| false).unwrap();
    assert_eq!(trace.on_topic(GT_ODOM).count(), 100);
    assert_eq!(trace.on_topic(GPS_FIX).count(), 10);
    assert_eq!(trace.on_topic("/imu/0/data").count(), 100);
    assert_eq!(trace.on_topic("/imu/1/data").count(), 100);
    assert_eq!(trace.on_topic(WHEEL_SPEED).count(), 50);
    assert_eq!(trace.on_topic(LIO_ODOM).count(), 20);
}

#[test]
fn non_finite_state_stops_the_run() {
    let bad = VehicleState {
        vx: f64::NAN,
        ..Default::default()
    };
    let node = PlantNode::new(PlantConfig::default(), bad, 0).unwrap();
    let (trace, outcome) = schedule_run(vec![Box::new(node)], SimClock::default(), 1.0, |_| false).unwrap();
    assert_eq!(outcome.reason, StopReason::PlantDiverged);
    assert_eq!(trace.on_topic(crate::simbus::ERRORS_TOPIC).count(), 1);
}

#[test]
fn vehicle_params_can_be_patched_at_runtime() {
    let mut node = PlantNode::new(PlantConfig::default(), VehicleState::default(), 0).unwrap();
    node.apply_param("vehicle.drag_coeff", "2.0").unwrap();
    assert!(node.apply_param("vehicle.mass", "-1").is_err());
    assert!(node.apply_param("vehicle.wings", "2").is_err());
}
