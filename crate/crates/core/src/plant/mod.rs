//! Single-track vehicle plant, sensor emulation and ghost opponents.
//!
//! The plant runs at the base step and is the only writer of ground truth.
//! Sensor topics carry ground truth plus seeded Gaussian noise; each sensor
//! draws from its own named random stream.

mod ghost;
mod sensors;
mod vehicle;

use serde::{Deserialize, Serialize};

pub use ghost::{GhostNode, GhostOpponent, GhostPose, GT_OPPONENTS, PERCEPTION_OPPONENTS};
pub use sensors::{
    gt_payload, imu_topic, GpsConfig, ImuConfig, LioConfig, SensorBank, SensorSuite, WheelConfig, GPS_FIX,
    GT_ODOM, LIO_ODOM, WHEEL_SPEED,
};
pub use vehicle::{init_vehicle, step, InitError, VehicleParams, VehicleState};

use crate::simbus::{
    codes, period_to_ticks, Message, Node, NodeContext, NodeError, Payload, Publication, StopReason, Tick,
    BASE_STEP,
};

pub const CMD_ACTUATION: &str = "/cmd/actuation";
pub const CMD_STOP: &str = "/cmd/stop";

/// Schema of `/cmd/actuation`: steering angle (rad) and longitudinal force
/// (N, negative brakes).
pub fn actuation_payload(steer: f64, force: f64) -> Payload {
    Payload::new().with("steer", steer).with("force", force)
}

/// Schema of `/cmd/stop`. `emergency` = 1 centres the steering; otherwise
/// the last steering command is kept while braking with `brake` N.
pub fn stop_payload(emergency: bool, brake: f64) -> Payload {
    Payload::new()
        .with("emergency", if emergency { 1.0 } else { 0.0 })
        .with("brake", brake)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub vehicle: VehicleParams,
    pub sensors: SensorSuite,
}

#[derive(Debug, Clone, Copy)]
struct StopCmd {
    emergency: bool,
    brake: f64,
}

/// Bus node that integrates the vehicle and publishes truth and sensors.
pub struct PlantNode {
    params: VehicleParams,
    state: VehicleState,
    sensors: SensorBank,
    periods: Periods,
    steer_cmd: f64,
    force_cmd: f64,
    stop: Option<StopCmd>,
    diverged: bool,
}

struct Periods {
    gt: Tick,
    gps: Tick,
    imu: Vec<Tick>,
    wheel: Tick,
    lio: Tick,
}

impl PlantNode {
    pub fn new(config: PlantConfig, initial: VehicleState, seed: u64) -> Result<Self, String> {
        config.vehicle.validate()?;
        config.sensors.validate()?;
        let t = |p: f64| period_to_ticks(p).map_err(|e| e.to_string());
        let s = &config.sensors;
        let periods = Periods {
            gt: t(s.gt_period)?,
            gps: t(s.gps.period)?,
            imu: s.imu.iter().map(|i| t(i.period)).collect::<Result<_, _>>()?,
            wheel: t(s.wheel.period)?,
            lio: t(s.lio.period)?,
        };
        Ok(Self {
            steer_cmd: initial.steer,
            force_cmd: initial.drive_force,
            params: config.vehicle,
            state: initial,
            sensors: SensorBank::new(config.sensors, seed),
            periods,
            stop: None,
            diverged: false,
        })
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }
}

impl Node for PlantNode {
    fn name(&self) -> &str {
        "plant"
    }

    fn period(&self) -> f64 {
        BASE_STEP
    }

    fn subscriptions(&self) -> Vec<String> {
        vec![CMD_ACTUATION.into(), CMD_STOP.into()]
    }

    fn publications(&self) -> Vec<Publication> {
        let s = VehicleState::default();
        let mut bank = SensorBank::new(SensorSuite::ideal(), 0);
        let mut pubs = vec![
            Publication::new(GT_ODOM, gt_payload(&s)),
            Publication::new(GPS_FIX, bank.gps(&s)),
            Publication::new(WHEEL_SPEED, bank.wheel(&s)),
            Publication::new(LIO_ODOM, bank.lio(0.0, &s)),
        ];
        for i in 0..self.periods.imu.len() {
            pubs.push(Publication::new(imu_topic(i), bank.imu(0, &s)));
        }
        pubs
    }

    fn on_message(&mut self, msg: &Message, _ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        let p = &msg.payload;
        match msg.topic.as_str() {
            CMD_ACTUATION => {
                if let (Some(steer), Some(force)) = (p.scalar("steer"), p.scalar("force")) {
                    self.steer_cmd = steer;
                    self.force_cmd = force;
                }
            }
            CMD_STOP => {
                let emergency = p.scalar("emergency").unwrap_or(1.0) != 0.0;
                let brake = p.scalar("brake").unwrap_or(self.params.brake_force_max);
                // an emergency request upgrades a latched soft stop, never the reverse
                if self.stop.is_none_or(|s| emergency && !s.emergency) {
                    self.stop = Some(StopCmd { emergency, brake });
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        if self.diverged {
            return Ok(());
        }
        let tick = ctx.tick();
        if tick > 0 {
            let (steer, force) = match self.stop {
                Some(StopCmd { emergency: true, brake }) => (0.0, -brake),
                Some(StopCmd { emergency: false, brake }) => (self.steer_cmd, -brake),
                None => (self.steer_cmd, self.force_cmd),
            };
            self.state = step(&self.state, &self.params, steer, force, BASE_STEP);
        }
        if !self.state.is_finite() {
            self.diverged = true;
            ctx.request_stop(StopReason::PlantDiverged);
            return Err(NodeError::fatal(codes::PLANT_DIVERGED, "vehicle state is not finite"));
        }
        let now = ctx.now();
        let s = self.state;
        self.sensors.record(now, &s);
        let due = |p: Tick| tick % p == 0;
        if due(self.periods.gt) {
            ctx.publish(GT_ODOM, gt_payload(&s));
        }
        for i in 0..self.periods.imu.len() {
            if due(self.periods.imu[i]) {
                let p = self.sensors.imu(i, &s);
                ctx.publish(&imu_topic(i), p);
            }
        }
        if due(self.periods.wheel) {
            let p = self.sensors.wheel(&s);
            ctx.publish(WHEEL_SPEED, p);
        }
        if due(self.periods.gps) {
            let p = self.sensors.gps(&s);
            ctx.publish(GPS_FIX, p);
        }
        if due(self.periods.lio) {
            let p = self.sensors.lio(now, &s);
            ctx.publish(LIO_ODOM, p);
        }
        Ok(())
    }

    fn apply_param(&mut self, param: &str, value: &str) -> Result<(), NodeError> {
        let path = param.strip_prefix("vehicle.").unwrap_or(param);
        let mut next = self.params.clone();
        crate::params::patch(&mut next, path, value).map_err(|e| NodeError::warning(codes::PARAM, e))?;
        next.validate().map_err(|e| NodeError::warning(codes::PARAM, e))?;
        self.params = next;
        Ok(())
    }
}

#[cfg(test)]
mod tests;
