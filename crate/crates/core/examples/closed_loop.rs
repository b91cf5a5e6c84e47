//! The driving stack against the vehicle model on the oval for 40 s,
//! without a scenario: prints tracking errors and speed once a second.
//!
//! cargo run --example closed_loop

use std::sync::Arc;

use racesim::plant::{init_vehicle, PlantConfig, PlantNode, GT_ODOM};
use racesim::simbus::{schedule_run, Node, SimClock};
use racesim::stack::{build_stack, StackConfig, CTRL_DEBUG};
use racesim::trackgeom::{stadium_points, FrenetPose, RacingLine, TrackModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pts = stadium_points(500.0, 250.0, 2.0);
    let n = pts.len();
    let track = Arc::new(TrackModel::new(pts.clone(), vec![8.0; n], vec![8.0; n])?);
    let line = Arc::new(RacingLine::new(pts, vec![70.0; n], 32.0)?);
    let plant = PlantConfig::default();
    let (init, _) = init_vehicle(&track, &line, &FrenetPose::default(), 30.0, &plant.vehicle)?;
    let vehicle = plant.vehicle.clone();
    let mut nodes: Vec<Box<dyn Node>> = vec![Box::new(PlantNode::new(plant, init, 1)?)];
    nodes.extend(build_stack(&StackConfig::default(), &vehicle, track, line));
    let (trace, _) = schedule_run(nodes, SimClock::default(), 40.0, |_| false)?;

    let mut next = 0.0;
    let speeds: Vec<(f64, f64)> = trace
        .on_topic(GT_ODOM)
        .filter_map(|e| Some((e.msg.stamp, e.msg.payload.scalar("speed")?)))
        .collect();
    for e in trace.on_topic(CTRL_DEBUG) {
        if e.msg.stamp + 1e-9 < next {
            continue;
        }
        next += 1.0;
        let p = &e.msg.payload;
        let v = speeds.iter().rev().find(|(t, _)| *t <= e.msg.stamp).map_or(f64::NAN, |x| x.1);
        println!(
            "t={:4.1} s  speed {:5.2} m/s (target {:5.2})  lateral error {:+.3} m  heading error {:+.4} rad",
            e.msg.stamp,
            v,
            p.scalar("v_target").unwrap_or(f64::NAN),
            p.scalar("lateral_error").unwrap_or(f64::NAN),
            p.scalar("heading_error").unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
