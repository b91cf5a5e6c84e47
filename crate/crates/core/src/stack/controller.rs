use serde::{Deserialize, Serialize};

use super::{patch_param, Odometry, CTRL_DEBUG, LOC_ODOM, PLAN_TRAJECTORY};
use crate::plant::{actuation_payload, VehicleParams, CMD_ACTUATION, CMD_STOP};
use crate::simbus::{Message, Node, NodeContext, NodeError, Payload, Publication};
use crate::trackgeom::wrap_angle;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    /// Pure-pursuit lookahead = max(lookahead_min, lookahead_time * speed).
    pub lookahead_time: f64,
    pub lookahead_min: f64,
    /// How far ahead the speed target is read, seconds.
    pub speed_preview: f64,
    pub kp: f64,
    pub ki: f64,
    pub integrator_max: f64,
    /// Start the speed integrator at the force holding the initial speed.
    pub warm_start: bool,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            lookahead_time: 0.8,
            lookahead_min: 8.0,
            speed_preview: 0.3,
            kp: 3000.0,
            ki: 800.0,
            integrator_max: 12000.0,
            warm_start: true,
        }
    }
}

/// Tracking state of the ego relative to a trajectory polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PathFoot {
    pub segment: usize,
    pub t: f64,
    /// Left-positive lateral error of the ego w.r.t. the path.
    pub lateral: f64,
    pub heading: f64,
}

/// Closest point on an open polyline.
pub(crate) fn path_foot(xs: &[f64], ys: &[f64], x: f64, y: f64) -> Option<PathFoot> {
    let mut best: Option<(f64, PathFoot)> = None;
    for i in 0..xs.len().saturating_sub(1) {
        let (dx, dy) = (xs[i + 1] - xs[i], ys[i + 1] - ys[i]);
        let len2 = dx * dx + dy * dy;
        if len2 <= 0.0 {
            continue;
        }
        let t = (((x - xs[i]) * dx + (y - ys[i]) * dy) / len2).clamp(0.0, 1.0);
        let (px, py) = (xs[i] + t * dx, ys[i] + t * dy);
        let dist2 = (x - px).powi(2) + (y - py).powi(2);
        if best.is_none_or(|(b, _)| dist2 < b) {
            let len = len2.sqrt();
            let lateral = (dx * (y - ys[i]) - dy * (x - xs[i])) / len;
            best = Some((
                dist2,
                PathFoot {
                    segment: i,
                    t,
                    lateral,
                    heading: dy.atan2(dx),
                },
            ));
        }
    }
    best.map(|(_, f)| f)
}

/// Point and interpolated value at `dist` along the polyline from `foot`.
fn walk(xs: &[f64], ys: &[f64], vals: &[f64], foot: &PathFoot, dist: f64) -> (f64, f64, f64) {
    let mut i = foot.segment;
    let mut t = foot.t;
    let mut left = dist;
    loop {
        let (dx, dy) = (xs[i + 1] - xs[i], ys[i + 1] - ys[i]);
        let len = dx.hypot(dy);
        let rest = (1.0 - t) * len;
        if left <= rest || i + 2 >= xs.len() {
            let tt = if len > 0.0 { (t + left / len).min(1.0) } else { 1.0 };
            return (
                xs[i] + tt * dx,
                ys[i] + tt * dy,
                vals[i] + tt * (vals[i + 1] - vals[i]),
            );
        }
        left -= rest;
        i += 1;
        t = 0.0;
    }
}

/// Pure pursuit with understeer compensation for steering, PI on speed for
/// the longitudinal force.
pub struct ControllerNode {
    p: ControllerParams,
    wheelbase: f64,
    understeer: f64,
    drag: f64,
    force_limits: (f64, f64),
    odom: Option<Odometry>,
    traj: Option<Payload>,
    integrator: Option<f64>,
    stop: Option<(bool, f64)>,
}

impl ControllerNode {
    pub fn new(params: ControllerParams, vehicle: &VehicleParams) -> Self {
        Self {
            p: params,
            wheelbase: vehicle.wheelbase(),
            understeer: vehicle.understeer_gradient(),
            drag: vehicle.drag_coeff,
            force_limits: (-vehicle.brake_force_max, vehicle.force_max),
            odom: None,
            traj: None,
            integrator: None,
            stop: None,
        }
    }
}

impl Node for ControllerNode {
    fn name(&self) -> &str {
        "controller"
    }

    fn period(&self) -> f64 {
        0.01
    }

    fn subscriptions(&self) -> Vec<String> {
        vec![LOC_ODOM.into(), PLAN_TRAJECTORY.into(), CMD_STOP.into()]
    }

    fn publications(&self) -> Vec<Publication> {
        vec![
            Publication::new(CMD_ACTUATION, actuation_payload(0.0, 0.0)),
            Publication::new(CTRL_DEBUG, debug_payload(0.0, 0.0, 0.0, 0.0, 0.0)),
        ]
    }

    fn on_message(&mut self, msg: &Message, _ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        match msg.topic.as_str() {
            LOC_ODOM => self.odom = Odometry::from_payload(&msg.payload),
            PLAN_TRAJECTORY => self.traj = Some(msg.payload.clone()),
            CMD_STOP => {
                let emergency = msg.payload.scalar("emergency").unwrap_or(1.0) != 0.0;
                let brake = msg.payload.scalar("brake").unwrap_or(-self.force_limits.0);
                let emergency = emergency || self.stop.is_some_and(|s| s.0);
                self.stop = Some((emergency, brake));
            }
            _ => {}
        }
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        let (Some(odom), Some(traj)) = (self.odom, self.traj.as_ref()) else {
            return Ok(());
        };
        let (Some(xs), Some(ys), Some(vs)) = (traj.vector("x"), traj.vector("y"), traj.vector("v")) else {
            return Ok(());
        };
        let Some(foot) = path_foot(xs, ys, odom.x, odom.y) else {
            return Ok(());
        };
        let v = odom.speed();
        let dt = self.period();

        let ld = (self.p.lookahead_time * v).max(self.p.lookahead_min);
        let (lx, ly, _) = walk(xs, ys, vs, &foot, ld);
        // aim along the velocity, not the body axis: sideslip at speed is
        // large enough to bias the lookahead geometry
        let course = if v > 1.0 { odom.yaw + odom.vy.atan2(odom.vx) } else { odom.yaw };
        let (s, c) = course.sin_cos();
        let (bx, by) = (c * (lx - odom.x) + s * (ly - odom.y), -s * (lx - odom.x) + c * (ly - odom.y));
        let dist = bx.hypot(by).max(1e-3);
        let kappa = 2.0 * by / (dist * dist);
        let mut steer = (self.wheelbase * kappa * (1.0 + self.understeer * v * v)).atan();

        let (_, _, v_target) = walk(xs, ys, vs, &foot, self.p.speed_preview * v);
        let err = v_target - v;
        let drag = self.drag;
        let warm = self.p.warm_start;
        let integ = self
            .integrator
            .get_or_insert_with(|| if warm { drag * v * v } else { 0.0 });
        let (fmin, fmax) = self.force_limits;
        let unclamped = self.p.kp * err + *integ;
        let saturated = (unclamped >= fmax && err > 0.0) || (unclamped <= fmin && err < 0.0);
        if !saturated {
            *integ = (*integ + self.p.ki * err * dt).clamp(-self.p.integrator_max, self.p.integrator_max);
        }
        let mut force = unclamped.clamp(fmin, fmax);
        if let Some((emergency, brake)) = self.stop {
            force = -brake;
            if emergency {
                steer = 0.0;
            }
        }

        ctx.publish(CMD_ACTUATION, actuation_payload(steer, force));
        let heading_err = wrap_angle(course - foot.heading);
        ctx.publish(CTRL_DEBUG, debug_payload(foot.lateral, heading_err, err, v_target, ld));
        Ok(())
    }

    fn apply_param(&mut self, param: &str, value: &str) -> Result<(), NodeError> {
        patch_param(&mut self.p, param, value)
    }
}

fn debug_payload(lateral: f64, heading: f64, speed: f64, v_target: f64, lookahead: f64) -> Payload {
    Payload::new()
        .with("lateral_error", lateral)
        .with("heading_error", heading)
        .with("speed_error", speed)
        .with("v_target", v_target)
        .with("lookahead", lookahead)
}
