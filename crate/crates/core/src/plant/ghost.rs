use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::simbus::{codes, stream_rng, Node, NodeContext, NodeError, Payload, Publication};
use crate::trackgeom::{FrenetPose, RacingLine};

pub const GT_OPPONENTS: &str = "/gt/opponents";
pub const PERCEPTION_OPPONENTS: &str = "/perception/opponents";

/// Open-loop opponent that follows a line at commanded speed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GhostOpponent {
    pub id: String,
    /// Start arc length on the line.
    pub s0: f64,
    pub speed: f64,
    /// Lateral offset from the line, left positive.
    #[serde(default)]
    pub d: f64,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_width")]
    pub width: f64,
}

fn default_length() -> f64 {
    4.9
}

fn default_width() -> f64 {
    1.9
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhostPose {
    pub s: f64,
    pub lap: u32,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

struct GhostRun {
    spec: GhostOpponent,
    travelled: f64,
}

impl GhostRun {
    fn pose(&self, line: &RacingLine) -> GhostPose {
        let l = line.line().total_length();
        let abs = self.spec.s0 + self.travelled;
        let lap = ((abs / l).floor() - (self.spec.s0 / l).floor()).max(0.0) as u32;
        let s = line.line().normalize_s(abs);
        let (x, y, yaw) = line.line().frenet_to_cartesian(&FrenetPose {
            s,
            d: self.spec.d,
            mu: 0.0,
        });
        GhostPose { s, lap, x, y, yaw }
    }
}

/// Publishes truth and detections of every ghost. Detections run at a
/// fifth of the truth rate.
pub struct GhostNode {
    line: Arc<RacingLine>,
    ghosts: Vec<GhostRun>,
    perception_sigma: f64,
    rng: ChaCha8Rng,
    steps: u64,
}

impl GhostNode {
    pub const PERIOD: f64 = 0.01;
    const PERCEPTION_EVERY: u64 = 5;

    pub fn new(line: Arc<RacingLine>, ghosts: Vec<GhostOpponent>, perception_sigma: f64, seed: u64) -> Self {
        Self {
            line,
            ghosts: ghosts.into_iter().map(|spec| GhostRun { spec, travelled: 0.0 }).collect(),
            perception_sigma,
            rng: stream_rng(seed, "perception"),
            steps: 0,
        }
    }

    pub fn poses(&self) -> Vec<GhostPose> {
        self.ghosts.iter().map(|g| g.pose(&self.line)).collect()
    }

    fn payload(&mut self, noisy: bool) -> Payload {
        let n = self.ghosts.len();
        let mut cols: [Vec<f64>; 8] = Default::default();
        let normal = Normal::new(0.0, self.perception_sigma.max(0.0)).ok();
        for g in &self.ghosts {
            let p = g.pose(&self.line);
            let (mut x, mut y) = (p.x, p.y);
            if let (true, Some(nd)) = (noisy && self.perception_sigma > 0.0, normal) {
                x += nd.sample(&mut self.rng);
                y += nd.sample(&mut self.rng);
            }
            let row = [x, y, p.yaw, g.spec.speed, g.spec.length, g.spec.width, p.s, p.lap as f64];
            for (c, v) in cols.iter_mut().zip(row) {
                c.push(v);
            }
        }
        let [x, y, yaw, speed, length, width, s, lap] = cols;
        Payload::new()
            .with("count", n as f64)
            .with("x", x)
            .with("y", y)
            .with("yaw", yaw)
            .with("speed", speed)
            .with("length", length)
            .with("width", width)
            .with("s", s)
            .with("lap", lap)
    }
}

impl Node for GhostNode {
    fn name(&self) -> &str {
        "ghosts"
    }

    fn period(&self) -> f64 {
        Self::PERIOD
    }

    fn publications(&self) -> Vec<Publication> {
        let n = self.ghosts.len();
        let v = vec![0.0; n];
        let schema = Payload::new()
            .with("count", 0.0)
            .with("x", v.clone())
            .with("y", v.clone())
            .with("yaw", v.clone())
            .with("speed", v.clone())
            .with("length", v.clone())
            .with("width", v.clone())
            .with("s", v.clone())
            .with("lap", v);
        vec![
            Publication::new(GT_OPPONENTS, schema.clone()),
            Publication::new(PERCEPTION_OPPONENTS, schema),
        ]
    }

    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        if self.steps > 0 {
            for g in &mut self.ghosts {
                g.travelled += g.spec.speed * Self::PERIOD;
            }
        }
        let truth = self.payload(false);
        ctx.publish(GT_OPPONENTS, truth);
        if self.steps % Self::PERCEPTION_EVERY == 0 {
            let det = self.payload(true);
            ctx.publish(PERCEPTION_OPPONENTS, det);
        }
        self.steps += 1;
        Ok(())
    }

    /// `<id>.speed` sets one ghost; `speed` sets all.
    fn apply_param(&mut self, param: &str, value: &str) -> Result<(), NodeError> {
        let v: f64 = serde_yaml::from_str(value)
            .map_err(|e| NodeError::warning(codes::PARAM, format!("ghost speed {value}: {e}")))?;
        if !(v >= 0.0) {
            return Err(NodeError::warning(codes::PARAM, format!("ghost speed must be >= 0, got {v}")));
        }
        let (target, key) = param.rsplit_once('.').map_or((None, param), |(a, b)| (Some(a), b));
        if key != "speed" {
            return Err(NodeError::warning(codes::PARAM, format!("ghosts have no parameter {param}")));
        }
        let mut hit = false;
        for g in &mut self.ghosts {
            if target.is_none_or(|t| t == g.spec.id) {
                g.spec.speed = v;
                hit = true;
            }
        }
        if hit {
            Ok(())
        } else {
            Err(NodeError::warning(codes::PARAM, format!("no ghost matches {param}")))
        }
    }
}
