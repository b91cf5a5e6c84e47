//! Vehicle model on its own: hold 30 m/s with a constant steering angle
//! and compare the settled yaw rate with the linear single-track formula,
//! then let the car coast.
//!
//! cargo run --example plant_cornering

use racesim::plant::{step, VehicleParams, VehicleState};

fn main() {
    let p = VehicleParams::default();
    let (v, delta, dt) = (30.0, 0.02, 0.001);
    let mut s = VehicleState {
        vx: v,
        ..Default::default()
    };
    for k in 0..=10_000 {
        if k % 1000 == 0 {
            println!("t={:5.2} s  vx={:6.3}  vy={:7.4}  yaw rate={:.5}", k as f64 * dt, s.vx, s.vy, s.yaw_rate);
        }
        let force = p.drag_coeff * s.vx * s.vx + 5000.0 * (v - s.vx);
        s = step(&s, &p, delta, force, dt);
    }
    let l = p.lf + p.lr;
    let k_us = p.mass / (l * l) * (p.lr / p.cornering_stiffness_front - p.lf / p.cornering_stiffness_rear);
    println!("linear model: {:.5} rad/s", v * delta / (l * (1.0 + k_us * v * v)));

    for _ in 0..5000 {
        s = step(&s, &p, 0.0, 0.0, dt);
    }
    println!("after 5 s coasting: {:.3} m/s", s.speed());
}
