use serde::{Deserialize, Serialize};

use crate::trackgeom::{reproject_init, wrap_angle, FrenetPose, GeomError, RacingLine, TrackModel};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub mass: f64,
    pub yaw_inertia: f64,
    pub lf: f64,
    pub lr: f64,
    pub cornering_stiffness_front: f64,
    pub cornering_stiffness_rear: f64,
    pub steer_max: f64,
    /// rad/s
    pub steer_rate_max: f64,
    pub force_max: f64,
    pub brake_force_max: f64,
    /// N/s
    pub force_rate_max: f64,
    pub drag_coeff: f64,
    /// Below this speed the kinematic model takes over.
    pub blend_speed: f64,
    pub length: f64,
    pub width: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 800.0,
            yaw_inertia: 1000.0,
            lf: 1.6,
            lr: 1.4,
            cornering_stiffness_front: 1.2e5,
            cornering_stiffness_rear: 1.4e5,
            steer_max: 0.3,
            steer_rate_max: 1.0,
            force_max: 9000.0,
            brake_force_max: 16000.0,
            force_rate_max: 60000.0,
            drag_coeff: 1.2,
            blend_speed: 5.0,
            length: 4.9,
            width: 1.9,
        }
    }
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    /// Understeer gradient `K` of the linear single-track model, s²/m².
    pub fn understeer_gradient(&self) -> f64 {
        let l = self.wheelbase();
        self.mass / (l * l)
            * (self.lr / self.cornering_stiffness_front - self.lf / self.cornering_stiffness_rear)
    }

    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("lf", self.lf),
            ("lr", self.lr),
            ("cornering_stiffness_front", self.cornering_stiffness_front),
            ("cornering_stiffness_rear", self.cornering_stiffness_rear),
            ("steer_max", self.steer_max),
            ("steer_rate_max", self.steer_rate_max),
            ("force_max", self.force_max),
            ("brake_force_max", self.brake_force_max),
            ("force_rate_max", self.force_rate_max),
            ("drag_coeff", self.drag_coeff),
            ("blend_speed", self.blend_speed),
            ("length", self.length),
            ("width", self.width),
        ];
        match fields.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            Some((name, v)) => Err(format!("vehicle parameter {name} must be positive, got {v}")),
            None => Ok(()),
        }
    }
}

/// Vehicle state; velocities are in the body frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    pub steer: f64,
    pub drive_force: f64,
    /// Body-frame accelerations from the last step.
    pub ax: f64,
    pub ay: f64,
}

impl VehicleState {
    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.yaw, self.vx, self.vy, self.yaw_rate, self.steer, self.drive_force]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum InitError {
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("spawn point is {0:.2} m outside the track")]
    OffTrack(f64),
    #[error("initial speed must be non-negative, got {0}")]
    NegativeSpeed(f64),
}

/// Spawn on the racing line via the centerline re-projection. The yaw rate
/// and steering angle match the local line curvature so a fast spawn starts
/// close to steady cornering.
pub fn init_vehicle(
    center: &TrackModel,
    traj: &RacingLine,
    pose: &FrenetPose,
    v0: f64,
    params: &VehicleParams,
) -> Result<(VehicleState, FrenetPose), InitError> {
    if !(v0 >= 0.0) {
        return Err(InitError::NegativeSpeed(v0));
    }
    let on_center = reproject_init(center, traj, pose)?;
    let (x, y, yaw) = center.frenet_to_cartesian(&on_center);
    let margin = center.distance_to_boundary(x, y)?;
    if margin < 0.0 {
        return Err(InitError::OffTrack(-margin));
    }
    let kappa = traj.line().curvature_at(pose.s);
    let steer = (params.wheelbase() * kappa).atan().clamp(-params.steer_max, params.steer_max);
    let state = VehicleState {
        x,
        y,
        yaw,
        vx: v0,
        steer,
        yaw_rate: kappa * v0,
        drive_force: params.drag_coeff * v0 * v0,
        ..VehicleState::default()
    };
    Ok((state, on_center))
}

fn rate_limit(current: f64, target: f64, max_rate: f64, dt: f64) -> f64 {
    let step = max_rate * dt;
    current + (target - current).clamp(-step, step)
}

/// Advance the single-track model by `dt`. Commands are clamped and rate
/// limited; negative force commands brake.
pub fn step(s: &VehicleState, p: &VehicleParams, steer_cmd: f64, force_cmd: f64, dt: f64) -> VehicleState {
    let steer_cmd = if steer_cmd.is_finite() { steer_cmd } else { s.steer };
    let force_cmd = if force_cmd.is_finite() { force_cmd } else { s.drive_force };
    let steer = rate_limit(s.steer, steer_cmd.clamp(-p.steer_max, p.steer_max), p.steer_rate_max, dt)
        .clamp(-p.steer_max, p.steer_max);
    let force = rate_limit(
        s.drive_force,
        force_cmd.clamp(-p.brake_force_max, p.force_max),
        p.force_rate_max,
        dt,
    );

    let fx = force - p.drag_coeff * s.vx * s.vx.abs();
    let l = p.wheelbase();

    // kinematic bicycle: the path speed carries the longitudinal force and
    // the slip angle follows the steering geometry
    let kin = {
        let v = (s.speed() + fx / p.mass * dt).max(0.0);
        let beta = (p.lr * steer.tan() / l).atan();
        let (vx, vy) = (v * beta.cos(), v * beta.sin());
        let r = vx * steer.tan() / l;
        (vx, vy, r, fx / p.mass, v * r)
    };

    let w = ((s.vx - 0.8 * p.blend_speed) / (0.2 * p.blend_speed)).clamp(0.0, 1.0);
    let (vx, vy, r, ax, ay) = if w == 0.0 {
        kin
    } else {
        let (cf, cr) = (p.cornering_stiffness_front, p.cornering_stiffness_rear);
        let alpha_f = steer - (s.vy + p.lf * s.yaw_rate).atan2(s.vx);
        let alpha_r = -(s.vy - p.lr * s.yaw_rate).atan2(s.vx);
        let fyf = cf * alpha_f;
        let fyr = cr * alpha_r;
        let ax = (fx - fyf * steer.sin()) / p.mass;
        let ay = (fyr + fyf * steer.cos()) / p.mass;
        let vx_dot = ax + s.vy * s.yaw_rate;
        let vy_dot = ay - s.vx * s.yaw_rate;
        let r_dot = (p.lf * fyf * steer.cos() - p.lr * fyr) / p.yaw_inertia;
        let dynamic = (
            (s.vx + vx_dot * dt).max(0.0),
            s.vy + vy_dot * dt,
            s.yaw_rate + r_dot * dt,
            ax,
            ay,
        );
        let mix = |a: f64, b: f64| w * a + (1.0 - w) * b;
        (
            mix(dynamic.0, kin.0),
            mix(dynamic.1, kin.1),
            mix(dynamic.2, kin.2),
            mix(dynamic.3, kin.3),
            mix(dynamic.4, kin.4),
        )
    };

    // semi-implicit: pose uses the updated velocities
    let yaw = wrap_angle(s.yaw + r * dt);
    let (sin, cos) = yaw.sin_cos();
    VehicleState {
        x: s.x + (vx * cos - vy * sin) * dt,
        y: s.y + (vx * sin + vy * cos) * dt,
        yaw,
        vx,
        vy,
        yaw_rate: r,
        steer,
        drive_force: force,
        ax,
        ay,
    }
}
