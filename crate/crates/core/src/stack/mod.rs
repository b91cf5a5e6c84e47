//! Miniature autonomy stack: localization muxer and filter, planner,
//! controller, safety and mission nodes.
//!
//! Node parameters are plain serde structs. At runtime they are addressed as
//! `node_name/param.path` through scenario commands.

mod controller;
mod localization;
mod mission;
mod muxer;
mod planner;
mod safety;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use controller::{ControllerNode, ControllerParams};
pub use localization::{LocalizationNode, LocalizationParams, SourceStatus};
pub use mission::{MissionNode, MissionParams};
pub use muxer::{MuxerNode, MuxerParams};
pub use planner::{PlannerNode, PlannerParams, TRAJ_POINTS};
pub use safety::{SafetyNode, SafetyParams};

use crate::plant::VehicleParams;
use crate::simbus::{codes, Node, NodeError, Payload};
use crate::trackgeom::{RacingLine, TrackModel};

pub const LOC_ODOM: &str = "/loc/odom";
pub const LOC_ODOM_RAW: &str = "/loc/odom_raw";
pub const PLAN_TRAJECTORY: &str = "/plan/trajectory";
pub const CTRL_DEBUG: &str = "/ctrl/debug";
pub const MISSION_CAPS: &str = "/mission/caps";
pub const SAFETY_STATE: &str = "/safety/state";

/// Localization output as published on `/loc/odom` and `/loc/odom_raw`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Odometry {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    /// Position variance per world axis, m².
    pub pos_cov: [f64; 2],
    /// Body-frame velocity.
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    pub vel_cov: [f64; 2],
    pub status: [SourceStatus; 4],
}

impl Odometry {
    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn max_pos_cov(&self) -> f64 {
        self.pos_cov[0].max(self.pos_cov[1])
    }

    pub fn to_payload(&self) -> Payload {
        let status = ["gps", "lio", "imu", "wheel"]
            .iter()
            .zip(self.status)
            .fold(Payload::new(), |p, (name, st)| p.with(name, st.code()));
        Payload::new()
            .with(
                "pose",
                Payload::new()
                    .with("position", [self.x, self.y])
                    .with("yaw", self.yaw)
                    .with("covariance", self.pos_cov),
            )
            .with(
                "twist",
                Payload::new()
                    .with("linear", [self.vx, self.vy])
                    .with("yaw_rate", self.yaw_rate)
                    .with("covariance", self.vel_cov),
            )
            .with("status", status)
    }

    pub fn from_payload(p: &Payload) -> Option<Self> {
        let pos = p.vector("pose.position")?;
        let pc = p.vector("pose.covariance")?;
        let lin = p.vector("twist.linear")?;
        let vc = p.vector("twist.covariance")?;
        if pos.len() != 2 || pc.len() != 2 || lin.len() != 2 || vc.len() != 2 {
            return None;
        }
        let st = |k: &str| SourceStatus::from_code(p.scalar(&format!("status.{k}")).unwrap_or(0.0));
        Some(Self {
            x: pos[0],
            y: pos[1],
            yaw: p.scalar("pose.yaw")?,
            pos_cov: [pc[0], pc[1]],
            vx: lin[0],
            vy: lin[1],
            yaw_rate: p.scalar("twist.yaw_rate")?,
            vel_cov: [vc[0], vc[1]],
            status: [st("gps"), st("lio"), st("imu"), st("wheel")],
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct StackConfig {
    pub loc_muxer: MuxerParams,
    pub localization: LocalizationParams,
    pub planner: PlannerParams,
    pub controller: ControllerParams,
    pub safety: SafetyParams,
    pub mission: MissionParams,
}

impl StackConfig {
    /// Apply a `node/param.path` override given as YAML text.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let (node, path) = key
            .split_once('/')
            .ok_or_else(|| format!("parameter key {key} must look like node/param"))?;
        match node {
            "loc_muxer" => crate::params::patch(&mut self.loc_muxer, path, value),
            "localization" => crate::params::patch(&mut self.localization, path, value),
            "planner" => crate::params::patch(&mut self.planner, path, value),
            "controller" => crate::params::patch(&mut self.controller, path, value),
            "safety" => crate::params::patch(&mut self.safety, path, value),
            "mission" => crate::params::patch(&mut self.mission, path, value),
            _ => Err(format!("unknown stack node {node}")),
        }
    }

    pub fn node_names() -> [&'static str; 6] {
        ["loc_muxer", "localization", "planner", "controller", "safety", "mission"]
    }
}

/// Instantiate the stack nodes in execution order.
pub fn build_stack(
    config: &StackConfig,
    vehicle: &VehicleParams,
    track: Arc<TrackModel>,
    line: Arc<RacingLine>,
) -> Vec<Box<dyn Node>> {
    vec![
        Box::new(LocalizationNode::new(config.localization.clone())),
        Box::new(MuxerNode::new(config.loc_muxer.clone())),
        Box::new(MissionNode::new(config.mission.clone())),
        Box::new(PlannerNode::new(config.planner.clone(), vehicle, track, line)),
        Box::new(ControllerNode::new(config.controller.clone(), vehicle)),
        Box::new(SafetyNode::new(config.safety.clone())),
    ]
}

/// Shared runtime-parameter handling for stack nodes.
pub(crate) fn patch_param<T: Serialize + serde::de::DeserializeOwned>(
    params: &mut T,
    param: &str,
    value: &str,
) -> Result<(), NodeError> {
    crate::params::patch(params, param, value).map_err(|e| NodeError::warning(codes::PARAM, e))
}

#[cfg(test)]
mod tests;
