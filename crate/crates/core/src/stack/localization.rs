use nalgebra::{Matrix2, Matrix2x4, Matrix4, RowVector4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::{patch_param, Odometry, LOC_ODOM_RAW};
use crate::plant::{GPS_FIX, LIO_ODOM, WHEEL_SPEED};
use crate::simbus::{codes, topic_matches, Message, Node, NodeContext, NodeError, Publication};
use crate::trackgeom::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SourceStatus {
    #[default]
    Ok,
    Stale,
    Banned,
}

impl SourceStatus {
    pub fn code(self) -> f64 {
        match self {
            Self::Ok => 0.0,
            Self::Stale => 1.0,
            Self::Banned => 2.0,
        }
    }

    pub fn from_code(c: f64) -> Self {
        match c as i64 {
            1 => Self::Stale,
            2 => Self::Banned,
            _ => Self::Ok,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationParams {
    /// Nothing is published until this long after the first position fix.
    pub init_delay: f64,
    /// Fatal error when no input at all arrives for this long.
    pub watchdog_timeout: f64,
    pub stale_timeout: f64,
    /// Mahalanobis gate on 2-D position innovations.
    pub gate_chi2: f64,
    /// Consecutive gate violations before a source is banned.
    pub gate_count: u32,
    /// Acceleration process noise, m/s².
    pub accel_sigma: f64,
    /// Position random walk, m²/s.
    pub pos_random_walk: f64,
    pub yaw_random_walk: f64,
    pub wheel_sigma: f64,
    pub imu_yaw_sigma: f64,
    pub lio_yaw_sigma: f64,
    /// Lower bound on position measurement sigma.
    pub min_meas_sigma: f64,
}

impl Default for LocalizationParams {
    fn default() -> Self {
        Self {
            init_delay: 1.0,
            watchdog_timeout: 0.5,
            stale_timeout: 0.3,
            gate_chi2: 13.8,
            gate_count: 5,
            accel_sigma: 0.5,
            pos_random_walk: 0.015,
            yaw_random_walk: 1e-5,
            wheel_sigma: 0.1,
            imu_yaw_sigma: 0.005,
            lio_yaw_sigma: 0.005,
            min_meas_sigma: 0.01,
        }
    }
}

const GPS: usize = 0;
const LIO: usize = 1;
const IMU: usize = 2;
const WHEEL: usize = 3;

#[derive(Debug, Clone, Copy, Default)]
struct Source {
    last_seen: Option<f64>,
    gate_fails: u32,
    banned: bool,
}

/// Constant-velocity Kalman filter over world position and velocity with a
/// separate yaw filter. IMUs drive the prediction; GPS and LIO correct the
/// position and wheel speed corrects the longitudinal velocity.
pub struct LocalizationNode {
    p: LocalizationParams,
    x: Vector4<f64>,
    cov: Matrix4<f64>,
    yaw: f64,
    yaw_var: f64,
    t_state: f64,
    accel_body: [f64; 2],
    gyro: f64,
    wheel_speed: Option<f64>,
    yaw_seen: bool,
    initialized_at: Option<f64>,
    sources: [Source; 4],
    last_input: f64,
    dead: bool,
}

impl LocalizationNode {
    pub fn new(params: LocalizationParams) -> Self {
        Self {
            p: params,
            x: Vector4::zeros(),
            cov: Matrix4::identity(),
            yaw: 0.0,
            yaw_var: 1.0,
            t_state: 0.0,
            accel_body: [0.0; 2],
            gyro: 0.0,
            wheel_speed: None,
            yaw_seen: false,
            initialized_at: None,
            sources: [Source::default(); 4],
            last_input: 0.0,
            dead: false,
        }
    }

    pub fn estimate(&self) -> Odometry {
        let (s, c) = self.yaw.sin_cos();
        let (vwx, vwy) = (self.x[2], self.x[3]);
        Odometry {
            x: self.x[0],
            y: self.x[1],
            yaw: self.yaw,
            pos_cov: [self.cov[(0, 0)], self.cov[(1, 1)]],
            vx: c * vwx + s * vwy,
            vy: -s * vwx + c * vwy,
            yaw_rate: self.gyro,
            vel_cov: [self.cov[(2, 2)], self.cov[(3, 3)]],
            status: [0, 1, 2, 3].map(|i| self.status(i, self.t_state)),
        }
    }

    fn status(&self, i: usize, now: f64) -> SourceStatus {
        let src = &self.sources[i];
        if src.banned {
            SourceStatus::Banned
        } else if src.last_seen.is_none_or(|t| now - t > self.p.stale_timeout) {
            SourceStatus::Stale
        } else {
            SourceStatus::Ok
        }
    }

    fn predict_to(&mut self, t: f64) {
        let dt = t - self.t_state;
        if dt <= 0.0 {
            return;
        }
        let (s, c) = self.yaw.sin_cos();
        let a = [
            c * self.accel_body[0] - s * self.accel_body[1],
            s * self.accel_body[0] + c * self.accel_body[1],
        ];
        self.x[0] += self.x[2] * dt + 0.5 * a[0] * dt * dt;
        self.x[1] += self.x[3] * dt + 0.5 * a[1] * dt * dt;
        self.x[2] += a[0] * dt;
        self.x[3] += a[1] * dt;
        let mut f = Matrix4::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let q_acc = self.p.accel_sigma * self.p.accel_sigma;
        let (q11, q12, q22) = (dt.powi(4) / 4.0, dt.powi(3) / 2.0, dt * dt);
        let mut q = Matrix4::zeros();
        for k in 0..2 {
            q[(k, k)] = q_acc * q11 + self.p.pos_random_walk * dt;
            q[(k, k + 2)] = q_acc * q12;
            q[(k + 2, k)] = q_acc * q12;
            q[(k + 2, k + 2)] = q_acc * q22;
        }
        self.cov = f * self.cov * f.transpose() + q;
        self.yaw = wrap_angle(self.yaw + self.gyro * dt);
        self.yaw_var += self.p.yaw_random_walk * dt;
        self.t_state = t;
    }

    /// Returns false when the measurement failed the gate.
    fn correct_position(&mut self, z: [f64; 2], var: [f64; 2]) -> bool {
        let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        let floor = self.p.min_meas_sigma * self.p.min_meas_sigma;
        let r = Matrix2::new(var[0].max(floor), 0.0, 0.0, var[1].max(floor));
        let y = Vector2::new(z[0] - self.x[0], z[1] - self.x[1]);
        let s = h * self.cov * h.transpose() + r;
        let Some(s_inv) = s.try_inverse() else {
            return false;
        };
        if (y.transpose() * s_inv * y)[0] > self.p.gate_chi2 {
            return false;
        }
        let k = self.cov * h.transpose() * s_inv;
        self.x += k * y;
        self.cov = (Matrix4::identity() - k * h) * self.cov;
        true
    }

    fn correct_wheel(&mut self, speed: f64) {
        let (s, c) = self.yaw.sin_cos();
        let h = RowVector4::new(0.0, 0.0, c, s);
        let y = speed - (h * self.x)[0];
        let sv = (h * self.cov * h.transpose())[0] + self.p.wheel_sigma * self.p.wheel_sigma;
        let k = self.cov * h.transpose() / sv;
        self.x += k * y;
        self.cov = (Matrix4::identity() - k * h) * self.cov;
    }

    fn correct_yaw(&mut self, z: f64, sigma: f64) {
        let r = sigma.max(1e-4).powi(2);
        let k = self.yaw_var / (self.yaw_var + r);
        self.yaw = wrap_angle(self.yaw + k * wrap_angle(z - self.yaw));
        self.yaw_var *= 1.0 - k;
    }

    fn initialize(&mut self, now: f64, stamp: f64, z: [f64; 2], var: [f64; 2]) {
        let v = self.wheel_speed.unwrap_or(0.0);
        let (s, c) = self.yaw.sin_cos();
        self.x = Vector4::new(z[0], z[1], v * c, v * s);
        let floor = self.p.min_meas_sigma * self.p.min_meas_sigma;
        self.cov = Matrix4::from_diagonal(&Vector4::new(var[0].max(floor), var[1].max(floor), 4.0, 4.0));
        self.t_state = stamp;
        self.initialized_at = Some(now);
    }

    fn position_fix(
        &mut self,
        src: usize,
        now: f64,
        stamp: f64,
        z: [f64; 2],
        var: [f64; 2],
    ) -> Result<(), NodeError> {
        if self.sources[src].banned {
            return Ok(());
        }
        if self.initialized_at.is_none() {
            if self.yaw_seen {
                self.initialize(now, stamp, z, var);
            }
            return Ok(());
        }
        self.predict_to(stamp);
        if self.correct_position(z, var) {
            self.sources[src].gate_fails = 0;
            return Ok(());
        }
        let entry = &mut self.sources[src];
        entry.gate_fails += 1;
        if entry.gate_fails >= self.p.gate_count {
            entry.banned = true;
            let name = if src == GPS { "gps" } else { "lio" };
            return Err(NodeError::warning(
                codes::LOC_SOURCE_BANNED,
                format!("localization banned {name} after {} rejected fixes", entry.gate_fails),
            ));
        }
        Ok(())
    }
}

impl Node for LocalizationNode {
    fn name(&self) -> &str {
        "localization"
    }

    fn period(&self) -> f64 {
        0.01
    }

    fn subscriptions(&self) -> Vec<String> {
        vec![GPS_FIX.into(), LIO_ODOM.into(), WHEEL_SPEED.into(), "/imu/*/data".into()]
    }

    fn publications(&self) -> Vec<Publication> {
        vec![Publication::new(LOC_ODOM_RAW, Odometry::default().to_payload())]
    }

    fn on_message(&mut self, msg: &Message, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        if self.dead {
            return Ok(());
        }
        let now = ctx.now();
        self.last_input = now;
        let p = &msg.payload;
        let pair = |key: &str| p.vector(key).filter(|v| v.len() == 2).map(|v| [v[0], v[1]]);
        match msg.topic.as_str() {
            GPS_FIX | LIO_ODOM => {
                let src = if msg.topic == GPS_FIX { GPS } else { LIO };
                self.sources[src].last_seen = Some(now);
                let (Some(z), Some(var)) = (pair("position"), pair("covariance")) else {
                    return Ok(());
                };
                if src == LIO {
                    if let (Some(yaw), false) = (p.scalar("yaw"), self.sources[LIO].banned) {
                        self.correct_yaw(yaw, self.p.lio_yaw_sigma);
                    }
                }
                return self.position_fix(src, now, msg.stamp, z, var);
            }
            WHEEL_SPEED => {
                self.sources[WHEEL].last_seen = Some(now);
                if let Some(v) = p.scalar("speed") {
                    self.wheel_speed = Some(v);
                    if self.initialized_at.is_some() {
                        self.predict_to(msg.stamp);
                        self.correct_wheel(v);
                    }
                }
            }
            t if topic_matches("/imu/*/data", t) => {
                self.sources[IMU].last_seen = Some(now);
                if self.initialized_at.is_some() {
                    self.predict_to(msg.stamp);
                }
                if let (Some(acc), Some(gyro), Some(yaw)) = (pair("accel"), p.scalar("gyro"), p.scalar("yaw")) {
                    self.accel_body = acc;
                    self.gyro = gyro;
                    if self.yaw_seen {
                        self.correct_yaw(yaw, self.p.imu_yaw_sigma);
                    } else {
                        self.yaw = yaw;
                        self.yaw_var = self.p.imu_yaw_sigma.powi(2);
                        self.yaw_seen = true;
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        if self.dead {
            return Ok(());
        }
        let now = ctx.now();
        if now - self.last_input > self.p.watchdog_timeout {
            self.dead = true;
            return Err(NodeError::fatal(
                codes::LOC_WATCHDOG,
                format!("localization received no input for {:.3} s", now - self.last_input),
            ));
        }
        let Some(t0) = self.initialized_at else {
            return Ok(());
        };
        self.predict_to(now);
        if now - t0 + 1e-9 < self.p.init_delay {
            return Ok(());
        }
        let mut est = self.estimate();
        est.status = [0, 1, 2, 3].map(|i| self.status(i, now));
        ctx.publish(LOC_ODOM_RAW, est.to_payload());
        Ok(())
    }

    fn apply_param(&mut self, param: &str, value: &str) -> Result<(), NodeError> {
        patch_param(&mut self.p, param, value)
    }
}
