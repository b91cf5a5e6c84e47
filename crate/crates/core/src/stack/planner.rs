use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{patch_param, Odometry, LOC_ODOM, MISSION_CAPS, PLAN_TRAJECTORY};
use crate::plant::{VehicleParams, CMD_STOP, PERCEPTION_OPPONENTS};
use crate::simbus::{codes, Message, Node, NodeContext, NodeError, Payload, Publication};
use crate::trackgeom::{FrenetPose, RacingLine, TrackModel};

/// Number of points in every published trajectory.
pub const TRAJ_POINTS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SidePreference {
    Auto,
    Left,
    Right,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    /// Arc-length spacing of trajectory points, m.
    pub spacing: f64,
    /// An overtake starts when the ego is at most this far behind.
    pub engage_distance: f64,
    /// The maneuver ends once the ego is this far ahead.
    pub release_gap: f64,
    /// Lateral offset of the passing line, in vehicle widths.
    pub offset_widths: f64,
    /// Arc length over which the lateral offset is blended in or out.
    pub ramp_length: f64,
    /// Extra lateral clearance the tunnel keeps from the opponent.
    pub clearance: f64,
    /// Distance kept from the track edge.
    pub edge_margin: f64,
    /// Gap held behind an opponent that cannot be passed.
    pub follow_distance: f64,
    pub follow_gain: f64,
    /// Minimum closing speed for an overtake, m/s.
    pub min_speed_delta: f64,
    pub side: SidePreference,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            spacing: 2.5,
            engage_distance: 80.0,
            release_gap: 20.0,
            offset_widths: 2.5,
            ramp_length: 150.0,
            clearance: 1.0,
            edge_margin: 0.3,
            follow_distance: 30.0,
            follow_gain: 0.5,
            min_speed_delta: 1.0,
            side: SidePreference::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Race,
    Overtake,
    Follow,
}

impl Mode {
    fn code(self) -> f64 {
        match self {
            Mode::Race => 0.0,
            Mode::Overtake => 1.0,
            Mode::Follow => 2.0,
        }
    }
}

/// Lateral offset from the racing line as a smooth ramp over unwrapped
/// arc length.
#[derive(Debug, Clone, Copy)]
struct Ramp {
    start: f64,
    from: f64,
    to: f64,
}

impl Ramp {
    fn at(&self, s: f64, length: f64) -> f64 {
        let u = ((s - self.start) / length).clamp(0.0, 1.0);
        self.from + (self.to - self.from) * u * u * (3.0 - 2.0 * u)
    }
}

#[derive(Debug, Clone, Copy)]
struct Opponent {
    s: f64,
    /// Lateral position w.r.t. the centerline.
    d_center: f64,
    speed: f64,
    length: f64,
    width: f64,
    /// Ego minus opponent arc length; negative while behind.
    gap: f64,
}

pub struct PlannerNode {
    p: PlannerParams,
    width: f64,
    length: f64,
    track: Arc<TrackModel>,
    line: Arc<RacingLine>,
    odom: Option<Odometry>,
    opponents: Payload,
    max_speed: f64,
    authorized: bool,
    stopped: bool,
    mode: Mode,
    ramp: Ramp,
    /// Unwrapped ego arc length along the racing line.
    s_unwrapped: Option<(f64, f64)>,
    lost_reported_at: Option<f64>,
    fallback_reported: bool,
}

impl PlannerNode {
    pub fn new(params: PlannerParams, vehicle: &VehicleParams, track: Arc<TrackModel>, line: Arc<RacingLine>) -> Self {
        Self {
            p: params,
            width: vehicle.width,
            length: vehicle.length,
            track,
            line,
            odom: None,
            opponents: Payload::new(),
            max_speed: f64::INFINITY,
            authorized: true,
            stopped: false,
            mode: Mode::Race,
            ramp: Ramp {
                start: 0.0,
                from: 0.0,
                to: 0.0,
            },
            s_unwrapped: None,
            lost_reported_at: None,
            fallback_reported: false,
        }
    }

    fn opponents(&self, s_ego: f64) -> Vec<Opponent> {
        let p = &self.opponents;
        let n = p.scalar("count").unwrap_or(0.0) as usize;
        let col = |k: &str| p.vector(k).unwrap_or(&[]).to_vec();
        let (xs, ys, vs, ls, ws) = (col("x"), col("y"), col("speed"), col("length"), col("width"));
        (0..n.min(xs.len()).min(ys.len()).min(vs.len()))
            .filter_map(|i| {
                let on_line = self.line.line().cartesian_to_frenet(xs[i], ys[i], 0.0).ok()?;
                let on_center = self.track.cartesian_to_frenet(xs[i], ys[i], 0.0).ok()?;
                Some(Opponent {
                    s: on_line.s,
                    d_center: on_center.d,
                    speed: vs[i],
                    length: ls.get(i).copied().unwrap_or(4.9),
                    width: ws.get(i).copied().unwrap_or(1.9),
                    gap: self.line.line().s_diff(s_ego, on_line.s),
                })
            })
            .collect()
    }

    /// Centerline-relative lateral position of a racing-line point with
    /// lateral offset `offset`.
    fn center_d(&self, s: f64, offset: f64) -> Option<(f64, f64)> {
        let (x, y, _) = self.line.line().frenet_to_cartesian(&FrenetPose { s, d: offset, mu: 0.0 });
        let c = self.track.cartesian_to_frenet(x, y, 0.0).ok()?;
        Some((c.s, c.d))
    }

    /// Feasible passing offset beside `opp`, preferring the roomier side.
    fn passing_offset(&self, opp: &Opponent) -> Option<f64> {
        let o = self.p.offset_widths * self.width;
        let half = self.width / 2.0;
        let min_sep = opp.width / 2.0 + half + self.p.clearance;
        let candidates: &[f64] = match self.p.side {
            SidePreference::Auto => &[1.0, -1.0],
            SidePreference::Left => &[1.0],
            SidePreference::Right => &[-1.0],
        };
        candidates
            .iter()
            .filter_map(|&sign| {
                let (sc, d) = self.center_d(opp.s, sign * o)?;
                let (wl, wr) = self.track.width_at(sc);
                let room = (wl - d).min(wr + d) - half - self.p.edge_margin;
                let separated = (d - opp.d_center).abs() >= min_sep;
                (room >= 0.0 && separated).then_some((sign * o, room))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(off, _)| off)
    }

    fn retarget(&mut self, s_abs: f64, to: f64) {
        if (self.ramp.to - to).abs() < 1e-9 {
            return;
        }
        let from = self.ramp.at(s_abs, self.p.ramp_length);
        self.ramp = Ramp { start: s_abs, from, to };
    }

    /// The trajectory plus an optional warning raised while planning it.
    fn plan(&mut self, odom: &Odometry) -> Result<(Payload, Option<NodeError>), NodeError> {
        let ego = self
            .line
            .line()
            .cartesian_to_frenet(odom.x, odom.y, odom.yaw)
            .map_err(|e| NodeError::warning(codes::PLANNER_LOST, format!("planner cannot place ego: {e}")))?;
        let s_abs = match self.s_unwrapped {
            Some((prev_s, prev_abs)) => prev_abs + self.line.line().s_diff(ego.s, prev_s),
            None => ego.s,
        };
        self.s_unwrapped = Some((ego.s, s_abs));

        let opponents = self.opponents(ego.s);
        let nearest = opponents
            .iter()
            .filter(|o| o.gap >= -self.p.engage_distance && o.gap < self.p.release_gap)
            .min_by(|a, b| a.gap.abs().total_cmp(&b.gap.abs()))
            .copied();
        let v_line_here = self.line.speed_at(ego.s).min(self.max_speed);
        let mut warning = None;
        match (self.mode, nearest) {
            (Mode::Overtake, Some(_)) => {}
            (_, None) => {
                self.mode = Mode::Race;
                self.fallback_reported = false;
                self.retarget(s_abs, 0.0);
            }
            (_, Some(opp)) => {
                let closing = v_line_here > opp.speed + self.p.min_speed_delta;
                if opp.gap < 0.0 && closing {
                    if let Some(off) = self.passing_offset(&opp) {
                        self.mode = Mode::Overtake;
                        self.retarget(s_abs, off);
                    } else {
                        self.mode = Mode::Follow;
                        self.retarget(s_abs, 0.0);
                        if !self.fallback_reported {
                            self.fallback_reported = true;
                            warning = Some(NodeError::warning(
                                codes::PLANNER_NO_OFFSET,
                                "no feasible passing offset, following opponent",
                            ));
                        }
                    }
                } else if self.mode == Mode::Follow && opp.gap >= 0.0 {
                    self.mode = Mode::Race;
                }
            }
        }

        let n = TRAJ_POINTS;
        let mut cols: [Vec<f64>; 6] = std::array::from_fn(|_| Vec::with_capacity(n));
        let half = self.width / 2.0;
        let v_ego = odom.speed().max(1.0);
        for k in 0..n {
            let ds = k as f64 * self.p.spacing;
            let s = self.line.line().normalize_s(ego.s + ds);
            let offset = self.ramp.at(s_abs + ds, self.p.ramp_length);
            let (x, y, _) = self.line.line().frenet_to_cartesian(&FrenetPose { s, d: offset, mu: 0.0 });
            let mut v = self.line.speed_at(s).min(self.max_speed);
            if let (Mode::Follow, Some(opp)) = (self.mode, nearest) {
                let hold = opp.speed + self.p.follow_gain * (-opp.gap - self.p.follow_distance);
                v = v.min(hold.max(0.0));
            }
            if self.stopped || !self.authorized {
                v = 0.0;
            }
            let (sc, d) = self.center_d(s, offset).unwrap_or((s, offset));
            let (wl, wr) = self.track.width_at(sc);
            let mut left = wl - half - self.p.edge_margin;
            let mut right = -(wr - half - self.p.edge_margin);
            let t_k = ds / v_ego;
            for opp in &opponents {
                let s_pred = opp.s + opp.speed * t_k;
                let reach = (opp.length + self.length) / 2.0 + self.p.clearance;
                if self.line.line().s_diff(s, s_pred).abs() < reach {
                    let keep = opp.width / 2.0 + half + self.p.clearance;
                    if d < opp.d_center {
                        left = left.min(opp.d_center - keep);
                    } else {
                        right = right.max(opp.d_center + keep);
                    }
                }
            }
            for (c, val) in cols.iter_mut().zip([x, y, v, s, left, right]) {
                c.push(val);
            }
        }
        let [x, y, v, s, left, right] = cols;
        let payload = Payload::new()
            .with("x", x)
            .with("y", y)
            .with("v", v)
            .with("s", s)
            .with("tunnel_left", left)
            .with("tunnel_right", right)
            .with("offset", self.ramp.at(s_abs, self.p.ramp_length))
            .with("target_offset", self.ramp.to)
            .with("mode", self.mode.code());
        Ok((payload, warning))
    }
}

pub(super) fn trajectory_schema() -> Payload {
    let v = vec![0.0; TRAJ_POINTS];
    Payload::new()
        .with("x", v.clone())
        .with("y", v.clone())
        .with("v", v.clone())
        .with("s", v.clone())
        .with("tunnel_left", v.clone())
        .with("tunnel_right", v)
        .with("offset", 0.0)
        .with("target_offset", 0.0)
        .with("mode", 0.0)
}

impl Node for PlannerNode {
    fn name(&self) -> &str {
        "planner"
    }

    fn period(&self) -> f64 {
        0.05
    }

    fn subscriptions(&self) -> Vec<String> {
        vec![
            LOC_ODOM.into(),
            PERCEPTION_OPPONENTS.into(),
            MISSION_CAPS.into(),
            CMD_STOP.into(),
        ]
    }

    fn publications(&self) -> Vec<Publication> {
        vec![Publication::new(PLAN_TRAJECTORY, trajectory_schema())]
    }

    fn on_message(&mut self, msg: &Message, _ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        match msg.topic.as_str() {
            LOC_ODOM => self.odom = Odometry::from_payload(&msg.payload),
            PERCEPTION_OPPONENTS => self.opponents = msg.payload.clone(),
            MISSION_CAPS => {
                self.max_speed = msg.payload.scalar("max_speed").unwrap_or(self.max_speed);
                self.authorized = msg.payload.scalar("authorized").is_none_or(|a| a != 0.0);
            }
            CMD_STOP => self.stopped = true,
            _ => {}
        }
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        let Some(odom) = self.odom else {
            return Ok(());
        };
        match self.plan(&odom) {
            Ok((traj, warning)) => {
                ctx.publish(PLAN_TRAJECTORY, traj);
                warning.map_or(Ok(()), Err)
            }
            Err(e) => {
                // report a lost ego at most once per second
                let now = ctx.now();
                if self.lost_reported_at.is_some_and(|t| now - t < 1.0) {
                    return Ok(());
                }
                self.lost_reported_at = Some(now);
                Err(e)
            }
        }
    }

    fn apply_param(&mut self, param: &str, value: &str) -> Result<(), NodeError> {
        patch_param(&mut self.p, param, value)
    }
}
