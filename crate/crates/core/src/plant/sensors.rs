use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::VehicleState;
use crate::simbus::{stream_rng, Payload};

pub const GT_ODOM: &str = "/gt/odom";
pub const GPS_FIX: &str = "/gps/fix";
pub const WHEEL_SPEED: &str = "/wheel/speed";
pub const LIO_ODOM: &str = "/lio/odom";

pub fn imu_topic(i: usize) -> String {
    format!("/imu/{i}/data")
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GpsConfig {
    pub period: f64,
    pub sigma: f64,
    /// Nominal satellite count reported in each fix.
    pub satellites: f64,
    /// Per-fix probability of losing one to three satellites.
    pub dropout_prob: f64,
}

impl Default for GpsConfig {
    fn default() -> Self {
        Self {
            period: 0.1,
            sigma: 0.03,
            satellites: 18.0,
            dropout_prob: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ImuConfig {
    pub period: f64,
    pub accel_sigma: f64,
    pub gyro_sigma: f64,
    pub gyro_bias: f64,
    pub yaw_sigma: f64,
}

impl Default for ImuConfig {
    fn default() -> Self {
        Self {
            period: 0.01,
            accel_sigma: 0.05,
            gyro_sigma: 0.002,
            gyro_bias: 0.0,
            yaw_sigma: 0.002,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct WheelConfig {
    pub period: f64,
    pub sigma: f64,
}

impl Default for WheelConfig {
    fn default() -> Self {
        Self {
            period: 0.02,
            sigma: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LioConfig {
    pub period: f64,
    pub sigma: f64,
    pub yaw_sigma: f64,
    /// Age of the pose at publication, seconds.
    pub latency: f64,
}

impl Default for LioConfig {
    fn default() -> Self {
        Self {
            period: 0.05,
            sigma: 0.03,
            yaw_sigma: 0.003,
            latency: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSuite {
    pub gt_period: f64,
    pub gps: GpsConfig,
    pub imu: Vec<ImuConfig>,
    pub wheel: WheelConfig,
    pub lio: LioConfig,
}

impl Default for SensorSuite {
    fn default() -> Self {
        Self {
            gt_period: 0.01,
            gps: GpsConfig::default(),
            imu: vec![ImuConfig::default(), ImuConfig::default()],
            wheel: WheelConfig::default(),
            lio: LioConfig::default(),
        }
    }
}

impl SensorSuite {
    /// Noise-free suite: every sensor reports ground truth.
    pub fn ideal() -> Self {
        let mut s = Self::default();
        s.gps.sigma = 0.0;
        s.gps.dropout_prob = 0.0;
        for imu in &mut s.imu {
            *imu = ImuConfig {
                accel_sigma: 0.0,
                gyro_sigma: 0.0,
                gyro_bias: 0.0,
                yaw_sigma: 0.0,
                ..imu.clone()
            };
        }
        s.wheel.sigma = 0.0;
        s.lio.sigma = 0.0;
        s.lio.yaw_sigma = 0.0;
        s
    }

    pub fn validate(&self) -> Result<(), String> {
        let sigmas = [
            self.gps.sigma,
            self.wheel.sigma,
            self.lio.sigma,
            self.lio.yaw_sigma,
            self.lio.latency,
            self.gps.dropout_prob,
        ];
        let imu_sigmas = self.imu.iter().flat_map(|i| [i.accel_sigma, i.gyro_sigma, i.yaw_sigma]);
        if sigmas.into_iter().chain(imu_sigmas).any(|s| !(s >= 0.0)) {
            return Err("sensor noise parameters must be non-negative".into());
        }
        Ok(())
    }
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).map(|n| n.sample(rng)).unwrap_or(0.0)
}

pub fn gt_payload(s: &VehicleState) -> Payload {
    Payload::new()
        .with("x", s.x)
        .with("y", s.y)
        .with("yaw", s.yaw)
        .with("vx", s.vx)
        .with("vy", s.vy)
        .with("yaw_rate", s.yaw_rate)
        .with("ax", s.ax)
        .with("ay", s.ay)
        .with("speed", s.speed())
        .with("steer", s.steer)
        .with("drive_force", s.drive_force)
}

/// Seeded noise generators for every sensor of a suite.
pub struct SensorBank {
    suite: SensorSuite,
    gps_rng: ChaCha8Rng,
    imu_rng: Vec<ChaCha8Rng>,
    wheel_rng: ChaCha8Rng,
    lio_rng: ChaCha8Rng,
    lio_history: VecDeque<(f64, VehicleState)>,
}

impl SensorBank {
    pub fn new(suite: SensorSuite, seed: u64) -> Self {
        let imu_rng = (0..suite.imu.len())
            .map(|i| stream_rng(seed, &format!("imu{i}")))
            .collect();
        Self {
            suite,
            gps_rng: stream_rng(seed, "gps"),
            imu_rng,
            wheel_rng: stream_rng(seed, "wheel"),
            lio_rng: stream_rng(seed, "lio"),
            lio_history: VecDeque::new(),
        }
    }

    pub fn suite(&self) -> &SensorSuite {
        &self.suite
    }

    pub fn gps(&mut self, s: &VehicleState) -> Payload {
        let c = &self.suite.gps;
        let sigma = c.sigma;
        let mut sats = c.satellites;
        if c.dropout_prob > 0.0 && self.gps_rng.random::<f64>() < c.dropout_prob {
            sats -= self.gps_rng.random_range(1..=3) as f64;
        }
        let var = sigma * sigma;
        Payload::new()
            .with(
                "position",
                [s.x + gauss(&mut self.gps_rng, sigma), s.y + gauss(&mut self.gps_rng, sigma)],
            )
            .with("covariance", [var, var])
            .with("satellites", sats)
    }

    pub fn imu(&mut self, i: usize, s: &VehicleState) -> Payload {
        let c = &self.suite.imu[i];
        let rng = &mut self.imu_rng[i];
        Payload::new()
            .with(
                "accel",
                [s.ax + gauss(rng, c.accel_sigma), s.ay + gauss(rng, c.accel_sigma)],
            )
            .with("gyro", s.yaw_rate + c.gyro_bias + gauss(rng, c.gyro_sigma))
            .with("yaw", s.yaw + gauss(rng, c.yaw_sigma))
    }

    pub fn wheel(&mut self, s: &VehicleState) -> Payload {
        Payload::new().with("speed", s.vx + gauss(&mut self.wheel_rng, self.suite.wheel.sigma))
    }

    /// Record the state for latency emulation; call every plant step.
    pub fn record(&mut self, t: f64, s: &VehicleState) {
        let keep = self.suite.lio.latency + 0.01;
        self.lio_history.push_back((t, *s));
        while self.lio_history.front().is_some_and(|(t0, _)| *t0 < t - keep) {
            self.lio_history.pop_front();
        }
    }

    pub fn lio(&mut self, t: f64, s: &VehicleState) -> Payload {
        let c = &self.suite.lio;
        let target = t - c.latency;
        let past = self
            .lio_history
            .iter()
            .rev()
            .find(|(ts, _)| *ts <= target + 1e-9)
            .map(|(_, st)| *st)
            .unwrap_or(*s);
        let var = c.sigma * c.sigma;
        let (sigma, yaw_sigma) = (c.sigma, c.yaw_sigma);
        Payload::new()
            .with(
                "position",
                [past.x + gauss(&mut self.lio_rng, sigma), past.y + gauss(&mut self.lio_rng, sigma)],
            )
            .with("yaw", past.yaw + gauss(&mut self.lio_rng, yaw_sigma))
            .with("covariance", [var, var])
    }
}
