use std::sync::Arc;

use super::config::ScenarioScript;
use crate::plant::GT_ODOM;
use crate::simbus::{
    codes, Message, Node, NodeContext, NodeError, Payload, Publication, Severity, StopReason, COMMANDS_TOPIC,
    ERRORS_TOPIC,
};
use crate::trackgeom::TrackModel;

pub const HEARTBEAT: &str = "/scenario/heartbeat";
/// One message per fired command group.
pub const FIRED: &str = "/scenario/fired";

pub const HEARTBEAT_PERIOD: f64 = 0.1;

/// Lap counter over a closed track. Lap 1 starts at the spawn point and a
/// new lap begins at each forward crossing of s = 0. Backward jitter across
/// the seam never counts twice.
#[derive(Debug, Clone)]
pub struct LapCounter {
    length: f64,
    progress: f64,
    last_s: f64,
    lap: u32,
    lap_start_s: f64,
}

impl LapCounter {
    pub fn new(length: f64, spawn_s: f64) -> Self {
        Self {
            length,
            progress: spawn_s,
            last_s: spawn_s,
            lap: 1,
            lap_start_s: spawn_s,
        }
    }

    /// Feed the next arc-length sample; returns true when a new lap began.
    pub fn update(&mut self, s: f64) -> bool {
        let mut d = (s - self.last_s).rem_euclid(self.length);
        if d > self.length / 2.0 {
            d -= self.length;
        }
        self.progress += d;
        self.last_s = s;
        let lap = 1 + (self.progress / self.length).floor().max(0.0) as u32;
        if lap > self.lap {
            self.lap = lap;
            self.lap_start_s = 0.0;
            true
        } else {
            false
        }
    }

    pub fn lap(&self) -> u32 {
        self.lap
    }

    pub fn s(&self) -> f64 {
        self.last_s
    }

    /// Whether position (lap, s) has been reached. Within lap 1 only points
    /// ahead of the spawn count.
    pub fn reached(&self, lap: u32, s: f64) -> bool {
        self.lap > lap || (self.lap == lap && self.last_s >= s && self.lap_start_s <= s)
    }
}

pub fn command_payload(target: &str, param: &str, value: &str) -> Payload {
    Payload::new()
        .with("target", target)
        .with("param", param)
        .with("value", value)
}

fn heartbeat_payload(lap: f64, s: f64, fired: f64) -> Payload {
    Payload::new().with("lap", lap).with("s", s).with("fired", fired)
}

fn fired_payload(group: f64, lap: f64, s: f64) -> Payload {
    Payload::new().with("group", group).with("lap", lap).with("s", s)
}

/// Fires scripted command groups at (lap, s) positions of the ego ground
/// truth and publishes a heartbeat until the script is complete.
pub struct ScenarioManager {
    script: ScenarioScript,
    commands: Vec<Vec<(String, String, String)>>,
    track: Arc<TrackModel>,
    laps: LapCounter,
    fired: Vec<bool>,
    done_at: Option<f64>,
    last_gt: Option<f64>,
}

impl ScenarioManager {
    pub fn new(script: ScenarioScript, track: Arc<TrackModel>, spawn_s: f64) -> Result<Self, super::ScenarioError> {
        let commands = script
            .groups
            .iter()
            .map(|g| g.parameters.iter().map(|c| c.resolve()).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let laps = LapCounter::new(track.total_length(), spawn_s);
        let fired = vec![false; script.groups.len()];
        Ok(Self {
            script,
            commands,
            track,
            laps,
            fired,
            done_at: None,
            last_gt: None,
        })
    }

    fn finished(&self, now: f64) -> bool {
        if self.fired.iter().any(|f| !f) {
            return false;
        }
        match self.script.end.after_time {
            Some(t) => now >= t,
            None => self.laps.lap() > self.script.final_lap(),
        }
    }
}

impl Node for ScenarioManager {
    fn name(&self) -> &str {
        "scenario_manager"
    }

    fn period(&self) -> f64 {
        HEARTBEAT_PERIOD
    }

    fn subscriptions(&self) -> Vec<String> {
        vec![GT_ODOM.into()]
    }

    fn publications(&self) -> Vec<Publication> {
        vec![
            Publication::new(COMMANDS_TOPIC, command_payload("", "", "")),
            Publication::new(HEARTBEAT, heartbeat_payload(0.0, 0.0, 0.0)),
            Publication::new(FIRED, fired_payload(0.0, 0.0, 0.0)),
        ]
    }

    fn on_message(&mut self, msg: &Message, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        let p = &msg.payload;
        let (Some(x), Some(y), Some(yaw)) = (p.scalar("x"), p.scalar("y"), p.scalar("yaw")) else {
            return Ok(());
        };
        let Ok(pose) = self.track.cartesian_to_frenet(x, y, yaw) else {
            return Ok(());
        };
        self.laps.update(pose.s);
        self.last_gt = Some(ctx.now());
        // groups are sorted by (lap, s); one placed behind the spawn point
        // waits for the next lap without holding back the others
        for (i, g) in self.script.groups.iter().enumerate() {
            if self.fired[i] || !self.laps.reached(g.lap, g.s) {
                continue;
            }
            for (node, param, value) in &self.commands[i] {
                ctx.publish(COMMANDS_TOPIC, command_payload(node, param, value));
            }
            ctx.publish(FIRED, fired_payload(i as f64, self.laps.lap() as f64, pose.s));
            self.fired[i] = true;
        }
        if self.done_at.is_none() && self.finished(ctx.now()) {
            self.done_at = Some(ctx.now());
        }
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        if self.done_at.is_none() && self.script.groups.is_empty() && self.finished(ctx.now()) {
            self.done_at = Some(ctx.now());
        }
        let grace = self.script.end.grace.unwrap_or(1.0);
        if self.done_at.is_some_and(|t| ctx.now() >= t + grace) {
            return Ok(());
        }
        ctx.publish(
            HEARTBEAT,
            heartbeat_payload(
                self.laps.lap() as f64,
                self.laps.s(),
                self.fired.iter().filter(|f| **f).count() as f64,
            ),
        );
        Ok(())
    }
}

/// Ends the run when the heartbeat stops, or once the vehicle has halted
/// after a fatal stack error.
pub struct StopDetector {
    suppress_window: f64,
    last_heartbeat: Option<f64>,
    fatal_seen: bool,
    speed: f64,
}

impl StopDetector {
    pub const HALT_SPEED: f64 = 0.5;

    pub fn new(suppress_window: f64) -> Self {
        Self {
            suppress_window,
            last_heartbeat: None,
            fatal_seen: false,
            speed: f64::INFINITY,
        }
    }
}

impl Node for StopDetector {
    fn name(&self) -> &str {
        "stop_detector"
    }

    fn period(&self) -> f64 {
        0.01
    }

    fn subscriptions(&self) -> Vec<String> {
        vec![HEARTBEAT.into(), ERRORS_TOPIC.into(), GT_ODOM.into()]
    }

    fn on_message(&mut self, msg: &Message, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        match msg.topic.as_str() {
            HEARTBEAT => self.last_heartbeat = Some(msg.stamp),
            ERRORS_TOPIC => {
                let fatal = msg.payload.scalar("severity") == Some(Severity::Fatal.code());
                let schema = msg.payload.scalar("code") == Some(codes::SCHEMA as f64);
                // schema violations are wiring bugs and end the run at once
                if fatal && schema {
                    ctx.request_stop(StopReason::StackStopCompleted);
                }
                if fatal && ctx.now() >= self.suppress_window {
                    self.fatal_seen = true;
                }
            }
            GT_ODOM => {
                if let Some(v) = msg.payload.scalar("speed") {
                    self.speed = v;
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        let now = ctx.now();
        if self.last_heartbeat.is_some_and(|t| now - t > 3.0 * HEARTBEAT_PERIOD + 1e-9) {
            ctx.request_stop(StopReason::ScenarioComplete);
        } else if self.fatal_seen && self.speed < Self::HALT_SPEED {
            ctx.request_stop(StopReason::StackStopCompleted);
        }
        Ok(())
    }
}
