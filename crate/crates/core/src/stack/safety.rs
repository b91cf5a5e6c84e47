use serde::{Deserialize, Serialize};

use super::{patch_param, Odometry, LOC_ODOM, SAFETY_STATE};
use crate::plant::{stop_payload, CMD_STOP};
use crate::simbus::{codes, Message, Node, NodeContext, NodeError, Payload, Publication, Severity, ERRORS_TOPIC};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyParams {
    /// Errors and covariance are ignored until this sim time, seconds.
    pub suppress_window: f64,
    /// Position variance above which the car is stopped, m².
    pub covariance_threshold: f64,
    pub soft_brake: f64,
    pub emergency_brake: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            suppress_window: 3.0,
            covariance_threshold: 0.03,
            soft_brake: 8000.0,
            emergency_brake: 16000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Latch {
    emergency: bool,
}

/// Latches a stop on fatal errors and on localization uncertainty.
/// A watchdog failure escalates to an emergency stop.
pub struct SafetyNode {
    p: SafetyParams,
    latch: Option<Latch>,
    covariance: f64,
    pending: Option<String>,
}

impl SafetyNode {
    pub fn new(params: SafetyParams) -> Self {
        Self {
            p: params,
            latch: None,
            covariance: 0.0,
            pending: None,
        }
    }

    fn trip(&mut self, emergency: bool, reason: String) {
        match &mut self.latch {
            Some(l) if l.emergency || !emergency => return,
            Some(l) => l.emergency = true,
            None => self.latch = Some(Latch { emergency }),
        }
        self.pending = Some(reason);
    }
}

fn state_payload(stopped: bool, emergency: bool, covariance: f64) -> Payload {
    Payload::new()
        .with("stopped", if stopped { 1.0 } else { 0.0 })
        .with("emergency", if emergency { 1.0 } else { 0.0 })
        .with("covariance", covariance)
}

impl Node for SafetyNode {
    fn name(&self) -> &str {
        "safety"
    }

    fn period(&self) -> f64 {
        0.01
    }

    fn subscriptions(&self) -> Vec<String> {
        vec![ERRORS_TOPIC.into(), LOC_ODOM.into()]
    }

    fn publications(&self) -> Vec<Publication> {
        vec![
            Publication::new(CMD_STOP, stop_payload(false, 0.0)),
            Publication::new(SAFETY_STATE, state_payload(false, false, 0.0)),
        ]
    }

    fn on_message(&mut self, msg: &Message, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        let armed = ctx.now() >= self.p.suppress_window;
        match msg.topic.as_str() {
            ERRORS_TOPIC => {
                let p = &msg.payload;
                let fatal = p.scalar("severity") == Some(Severity::Fatal.code());
                let code = p.scalar("code").unwrap_or(0.0) as u32;
                let own = p.scalar("source") == Some(ctx.index() as f64);
                if !armed || !fatal || own {
                    return Ok(());
                }
                let why = p.text("description").unwrap_or("").to_owned();
                self.trip(code == codes::LOC_WATCHDOG, format!("error {code}: {why}"));
            }
            LOC_ODOM => {
                if let Some(odom) = Odometry::from_payload(&msg.payload) {
                    self.covariance = odom.max_pos_cov();
                    if armed && !(self.covariance <= self.p.covariance_threshold) {
                        let c = self.covariance;
                        self.trip(false, format!("position covariance {c:.4} above threshold"));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        if let Some(l) = self.latch {
            let brake = if l.emergency { self.p.emergency_brake } else { self.p.soft_brake };
            ctx.publish(CMD_STOP, stop_payload(l.emergency, brake));
        }
        let emergency = self.latch.is_some_and(|l| l.emergency);
        ctx.publish(SAFETY_STATE, state_payload(self.latch.is_some(), emergency, self.covariance));
        match self.pending.take() {
            Some(reason) => Err(NodeError::fatal(codes::SAFETY_STOP, reason)),
            None => Ok(()),
        }
    }

    fn apply_param(&mut self, param: &str, value: &str) -> Result<(), NodeError> {
        patch_param(&mut self.p, param, value)
    }
}
