use serde::{Deserialize, Serialize};

use super::{patch_param, MISSION_CAPS};
use crate::simbus::{Node, NodeContext, NodeError, Payload, Publication};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MissionParams {
    /// Skip the pit start-up sequence and authorize driving at once.
    pub spawn_on_track: bool,
    /// Performance cap on target speed, m/s.
    pub max_speed: f64,
}

impl Default for MissionParams {
    fn default() -> Self {
        Self {
            spawn_on_track: true,
            max_speed: 100.0,
        }
    }
}

pub fn caps_payload(max_speed: f64, authorized: bool) -> Payload {
    Payload::new()
        .with("max_speed", max_speed)
        .with("authorized", if authorized { 1.0 } else { 0.0 })
}

/// Publishes the speed cap and the driving authorization. Without
/// `spawn_on_track` the start-up sequence never completes in simulation,
/// so the car is never authorized.
pub struct MissionNode {
    params: MissionParams,
}

impl MissionNode {
    pub fn new(params: MissionParams) -> Self {
        Self { params }
    }
}

impl Node for MissionNode {
    fn name(&self) -> &str {
        "mission"
    }

    fn period(&self) -> f64 {
        0.1
    }

    fn publications(&self) -> Vec<Publication> {
        vec![Publication::new(MISSION_CAPS, caps_payload(0.0, false))]
    }

    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        ctx.publish(
            MISSION_CAPS,
            caps_payload(self.params.max_speed, self.params.spawn_on_track),
        );
        Ok(())
    }

    fn apply_param(&mut self, param: &str, value: &str) -> Result<(), NodeError> {
        patch_param(&mut self.params, param, value)
    }
}
