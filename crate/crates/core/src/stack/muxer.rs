use serde::{Deserialize, Serialize};

use super::{patch_param, Odometry, LOC_ODOM, LOC_ODOM_RAW};
use crate::plant::GT_ODOM;
use crate::simbus::{Message, Node, NodeContext, NodeError, Publication};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MuxerParams {
    /// Ground truth is forwarded while sim time is below this.
    pub warmup: f64,
    /// Forward ground truth for the whole run.
    pub ground_truth_mode: bool,
}

impl Default for MuxerParams {
    fn default() -> Self {
        Self {
            warmup: 3.0,
            ground_truth_mode: false,
        }
    }
}

/// Ground truth in the `/loc/odom` layout.
pub fn gt_as_odometry(p: &crate::simbus::Payload) -> Option<Odometry> {
    Some(Odometry {
        x: p.scalar("x")?,
        y: p.scalar("y")?,
        yaw: p.scalar("yaw")?,
        vx: p.scalar("vx")?,
        vy: p.scalar("vy")?,
        yaw_rate: p.scalar("yaw_rate")?,
        ..Odometry::default()
    })
}

/// Chooses what the rest of the stack sees on `/loc/odom`: ground truth
/// during warm-up (or in ground-truth mode), the filter afterwards. The
/// switch is a hard cut.
pub struct MuxerNode {
    params: MuxerParams,
}

impl MuxerNode {
    pub fn new(params: MuxerParams) -> Self {
        Self { params }
    }

    fn use_truth(&self, now: f64) -> bool {
        self.params.ground_truth_mode || now < self.params.warmup
    }
}

impl Node for MuxerNode {
    fn name(&self) -> &str {
        "loc_muxer"
    }

    fn period(&self) -> f64 {
        1.0
    }

    fn subscriptions(&self) -> Vec<String> {
        vec![GT_ODOM.into(), LOC_ODOM_RAW.into()]
    }

    fn publications(&self) -> Vec<Publication> {
        vec![Publication::new(LOC_ODOM, Odometry::default().to_payload())]
    }

    fn on_message(&mut self, msg: &Message, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        let truth = self.use_truth(ctx.now());
        match msg.topic.as_str() {
            GT_ODOM if truth => {
                if let Some(odom) = gt_as_odometry(&msg.payload) {
                    ctx.publish_stamped(LOC_ODOM, msg.stamp, odom.to_payload());
                }
            }
            LOC_ODOM_RAW if !truth => ctx.forward(LOC_ODOM, msg),
            _ => {}
        }
        Ok(())
    }

    fn on_tick(&mut self, _ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        Ok(())
    }

    fn apply_param(&mut self, param: &str, value: &str) -> Result<(), NodeError> {
        patch_param(&mut self.params, param, value)
    }
}
