use super::collision::{overlaps, Footprint};
use super::merge::MasterTable;
use super::report::{
    DynamicsRecord, GhostCollision, LapRecord, Level, OvertakeOutcome, OvertakeRecord, SafetyStopRecord, TestFailure,
};
use super::table::TopicTable;
use super::{RunMeta, TelemetryError};
use crate::plant::{GT_ODOM, GT_OPPONENTS};
use crate::scenario::{LapCounter, Threshold};
use crate::simbus::{codes, Severity};
use crate::stack::{CTRL_DEBUG, SAFETY_STATE};
use crate::trackgeom::TrackModel;

/// Speed below which the vehicle counts as stationary, m/s.
pub const STANDSTILL: f64 = 0.5;
/// Longest tolerated unexplained standstill, s.
pub const MAX_STANDSTILL: f64 = 2.0;
/// Overtake window on the signed arc-length gap ego minus opponent, m.
pub const OVERTAKE_START_GAP: f64 = -30.0;
pub const OVERTAKE_END_GAP: f64 = 20.0;
/// At most this many failures are listed per test.
const MAX_FAILURES_PER_TEST: usize = 20;

#[derive(Debug, Clone)]
pub struct GhostTrack {
    pub id: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub yaw: Vec<f64>,
    pub speed: Vec<f64>,
    /// Arc length of the projection onto the centerline.
    pub s: Vec<f64>,
    pub length: f64,
    pub width: f64,
}

impl GhostTrack {
    pub fn footprint(&self, row: usize) -> Footprint {
        Footprint {
            x: self.x[row],
            y: self.y[row],
            yaw: self.yaw[row],
            length: self.length,
            width: self.width,
        }
    }
}

/// Ego state on the master grid with track-relative columns.
#[derive(Debug, Clone)]
pub struct Frame {
    pub time: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub yaw: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub yaw_rate: Vec<f64>,
    pub speed: Vec<f64>,
    pub steer: Vec<f64>,
    pub s: Vec<f64>,
    /// NaN where the pose could not be projected onto the centerline.
    pub d: Vec<f64>,
    /// Signed distance to the nearer edge; `-inf` when off the map.
    pub boundary: Vec<f64>,
    pub lap: Vec<u32>,
    pub lateral_error: Vec<f64>,
    pub heading_error: Vec<f64>,
    pub v_target: Vec<f64>,
    pub safety_stopped: Vec<bool>,
    pub ghosts: Vec<GhostTrack>,
    pub track_length: f64,
    pub dt: f64,
}

fn col(m: &MasterTable, topic: &str, name: &str) -> Vec<f64> {
    m.get(topic, name)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![f64::NAN; m.len()])
}

impl Frame {
    pub fn build(m: &MasterTable, track: &TrackModel, meta: &RunMeta) -> Result<Self, TelemetryError> {
        if m.get(GT_ODOM, "x").is_none() {
            return Err(TelemetryError::MissingTopic(GT_ODOM.into()));
        }
        let g = |name: &str| col(m, GT_ODOM, name);
        let (x, y, yaw) = (g("x"), g("y"), g("yaw"));
        let n = m.len();
        let mut s = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        let mut boundary = Vec::with_capacity(n);
        let mut last_s = meta.spawn_s;
        for i in 0..n {
            match track.cartesian_to_frenet(x[i], y[i], yaw[i]) {
                Ok(p) => {
                    let (wl, wr) = track.width_at(p.s);
                    last_s = p.s;
                    s.push(p.s);
                    d.push(p.d);
                    boundary.push((wl - p.d).min(wr + p.d));
                }
                Err(_) => {
                    s.push(last_s);
                    d.push(f64::NAN);
                    boundary.push(f64::NEG_INFINITY);
                }
            }
        }
        let (lap, _) = segment_laps(&s, meta.spawn_s, track.total_length());
        let stopped = col(m, SAFETY_STATE, "stopped").iter().map(|v| *v > 0.5).collect();

        let mut ghosts = Vec::new();
        for (i, spec) in meta.ghosts.iter().enumerate() {
            let gc = |name: &str| col(m, GT_OPPONENTS, &format!("{name}.{i}"));
            let (gx, gy, gyaw) = (gc("x"), gc("y"), gc("yaw"));
            let gs = (0..n)
                .map(|k| {
                    track
                        .cartesian_to_frenet(gx[k], gy[k], gyaw[k])
                        .map_or(f64::NAN, |p| p.s)
                })
                .collect();
            ghosts.push(GhostTrack {
                id: spec.id.clone(),
                speed: gc("speed"),
                x: gx,
                y: gy,
                yaw: gyaw,
                s: gs,
                length: spec.length,
                width: spec.width,
            });
        }
        let c = |name: &str| col(m, CTRL_DEBUG, name);
        Ok(Self {
            time: m.time.clone(),
            vx: g("vx"),
            vy: g("vy"),
            yaw_rate: g("yaw_rate"),
            speed: g("speed"),
            steer: g("steer"),
            x,
            y,
            yaw,
            s,
            d,
            boundary,
            lap,
            lateral_error: c("lateral_error"),
            heading_error: c("heading_error"),
            v_target: c("v_target"),
            safety_stopped: stopped,
            ghosts,
            track_length: track.total_length(),
            dt: m.dt(),
        })
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn ego_footprint(&self, row: usize, length: f64, width: f64) -> Footprint {
        Footprint {
            x: self.x[row],
            y: self.y[row],
            yaw: self.yaw[row],
            length,
            width,
        }
    }

    fn failure(&self, test: &str, row: usize, description: String) -> TestFailure {
        TestFailure {
            test: test.into(),
            description,
            time: self.time[row],
            lap: self.lap[row],
            s: self.s[row],
            d: known(self.d[row]),
        }
    }

    /// Distance travelled, integrating speed over the grid.
    pub fn distance(&self) -> f64 {
        self.speed.iter().filter(|v| v.is_finite()).sum::<f64>() * self.dt
    }
}

/// A lap as a half-open row range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LapSpan {
    pub lap: u32,
    pub start: usize,
    pub end: usize,
    /// Ended at the start line and started there too (or is the flying first
    /// lap from a spawn on the line).
    pub complete: bool,
}

/// Assign a lap number to every sample and group samples into laps. Lap 1
/// begins at the spawn point; numbering never decreases.
pub fn segment_laps(s: &[f64], spawn_s: f64, length: f64) -> (Vec<u32>, Vec<LapSpan>) {
    let mut counter = LapCounter::new(length, spawn_s);
    let laps: Vec<u32> = s
        .iter()
        .map(|v| {
            counter.update(*v);
            counter.lap()
        })
        .collect();
    let spawn_on_line = spawn_s < 0.01 * length;
    let mut spans: Vec<LapSpan> = Vec::new();
    for (i, lap) in laps.iter().enumerate() {
        match spans.last_mut() {
            Some(span) if span.lap == *lap => span.end = i + 1,
            _ => spans.push(LapSpan {
                lap: *lap,
                start: i,
                end: i + 1,
                complete: false,
            }),
        }
    }
    let count = spans.len();
    for (k, span) in spans.iter_mut().enumerate() {
        span.complete = k + 1 < count && (span.lap > 1 || spawn_on_line);
    }
    (laps, spans)
}

/// Time at which the start line was crossed between rows `i - 1` and `i`,
/// interpolated on arc length.
fn crossing_time(f: &Frame, i: usize) -> f64 {
    if i == 0 || i >= f.len() {
        return f.time[i.min(f.len() - 1)];
    }
    let before = f.track_length - f.s[i - 1];
    let after = f.s[i];
    let frac = if before + after > 0.0 { before / (before + after) } else { 0.0 };
    f.time[i - 1] + frac.clamp(0.0, 1.0) * (f.time[i] - f.time[i - 1])
}

fn known(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn finite(v: impl Iterator<Item = f64>) -> Vec<f64> {
    v.filter(|x| x.is_finite()).collect()
}

fn max_of(v: &[f64]) -> Option<f64> {
    v.iter().copied().reduce(f64::max)
}

fn mean_of(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn lap_records(f: &Frame, spans: &[LapSpan]) -> Vec<LapRecord> {
    spans
        .iter()
        .map(|sp| {
            let rows = sp.start..sp.end;
            let speed = finite(f.speed[rows.clone()].iter().copied());
            let lat = finite(f.lateral_error[rows.clone()].iter().map(|v| v.abs()));
            let head = finite(f.heading_error[rows].iter().map(|v| v.abs()));
            let time = sp.complete.then(|| {
                let start = if sp.start == 0 { f.time[0] } else { crossing_time(f, sp.start) };
                crossing_time(f, sp.end) - start
            });
            LapRecord {
                lap: sp.lap,
                complete: sp.complete,
                time,
                max_speed: max_of(&speed),
                avg_speed: mean_of(&speed),
                mean_lateral_error: mean_of(&lat),
                max_lateral_error: max_of(&lat),
                max_heading_error: max_of(&head),
            }
        })
        .collect()
}

/// Dynamics metric names in report order.
pub const DYNAMICS_METRICS: [&str; 4] = ["understeer", "sideslip", "yaw_rate", "lateral_velocity"];

/// Per-row value of a dynamics metric. Angles are in degrees. Understeer
/// and sideslip are undefined below `blend_speed`.
pub fn dynamics_series(f: &Frame, metric: &str, wheelbase: f64, blend_speed: f64) -> Vec<f64> {
    (0..f.len())
        .map(|i| {
            let (vx, vy, r) = (f.vx[i], f.vy[i], f.yaw_rate[i]);
            match metric {
                "understeer" if vx > blend_speed => (f.steer[i] - (wheelbase * r / vx).atan()).to_degrees(),
                "sideslip" if vx > blend_speed => vy.atan2(vx).to_degrees(),
                "yaw_rate" => r,
                "lateral_velocity" => vy,
                _ => f64::NAN,
            }
        })
        .collect()
}

pub fn level(value: f64, t: Option<Threshold>) -> Level {
    match t {
        Some(t) if value > t.red => Level::Red,
        Some(t) if value > t.yellow => Level::Yellow,
        _ => Level::Ok,
    }
}

/// Per-lap dynamics records plus, per lap and metric, the row of the
/// largest magnitude.
pub fn dynamics_records(
    f: &Frame,
    spans: &[LapSpan],
    meta: &RunMeta,
) -> Vec<(String, Vec<(DynamicsRecord, Option<usize>)>)> {
    DYNAMICS_METRICS
        .iter()
        .map(|metric| {
            let series = dynamics_series(f, metric, meta.vehicle.wheelbase(), meta.vehicle.blend_speed);
            let recs = spans
                .iter()
                .map(|sp| {
                    let mut arg: Option<usize> = None;
                    let mut sum = 0.0;
                    let mut n = 0usize;
                    for i in sp.start..sp.end {
                        let v = series[i].abs();
                        if !v.is_finite() {
                            continue;
                        }
                        sum += v;
                        n += 1;
                        if arg.is_none_or(|a| v > series[a].abs()) {
                            arg = Some(i);
                        }
                    }
                    let max = arg.map(|a| series[a].abs());
                    let rec = DynamicsRecord {
                        lap: sp.lap,
                        max,
                        avg: (n > 0).then(|| sum / n as f64),
                        level: max.map_or(Level::Ok, |m| level(m, meta.report.threshold(metric))),
                    };
                    (rec, arg)
                })
                .collect();
            ((*metric).to_owned(), recs)
        })
        .collect()
}

/// Maximal runs of true values as half-open ranges.
pub fn episodes(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, m) in mask.iter().enumerate() {
        match (start, *m) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, mask.len()));
    }
    out
}

/// Fatal stack errors raised after the suppress window, as
/// (time, code, description).
pub fn fatal_errors(errors: Option<&TopicTable>, suppress_window: f64) -> Vec<(f64, u32, String)> {
    let Some(t) = errors else { return Vec::new() };
    let (Some(sev), Some(code)) = (t.num("severity"), t.num("code")) else {
        return Vec::new();
    };
    let desc = t.text("description");
    (0..t.len())
        .filter(|&i| sev[i] == Severity::Fatal.code() && t.timestamps[i] >= suppress_window)
        .map(|i| {
            let d = desc.map(|d| d[i].clone()).unwrap_or_default();
            (t.timestamps[i], code[i] as u32, d)
        })
        .collect()
}

pub struct TestOutcome {
    pub failures: Vec<TestFailure>,
    pub safety_stop: Option<SafetyStopRecord>,
    pub collisions: Vec<GhostCollision>,
}

pub fn run_tests(
    f: &Frame,
    dynamics: &[(String, Vec<(DynamicsRecord, Option<usize>)>)],
    errors: Option<&TopicTable>,
    meta: &RunMeta,
) -> TestOutcome {
    let cfg = &meta.report;
    let mut failures = Vec::new();
    let mut safety_stop = None;
    let mut collisions = Vec::new();
    let n = f.len();
    let push_limited = |list: Vec<TestFailure>, out: &mut Vec<TestFailure>| {
        out.extend(list.into_iter().take(MAX_FAILURES_PER_TEST));
    };

    if cfg.enabled("tracking_errors") && n > 0 {
        let lat_red = cfg.threshold("lateral_error").map_or(f64::INFINITY, |t| t.red);
        let head_red = cfg.threshold("heading_error").map_or(f64::INFINITY, |t| t.red);
        // tracking is meaningless once a safety stop has taken over
        let mask: Vec<bool> = (0..n)
            .map(|i| {
                !f.safety_stopped[i]
                    && (f.lateral_error[i].abs() > lat_red || f.heading_error[i].abs() > head_red)
            })
            .collect();
        let list = episodes(&mask)
            .into_iter()
            .map(|(a, b)| {
                let lat = (a..b).map(|i| f.lateral_error[i].abs()).fold(0.0, f64::max);
                let head = (a..b).map(|i| f.heading_error[i].abs()).fold(0.0, f64::max);
                f.failure(
                    "tracking_errors",
                    a,
                    format!(
                        "tracking error for {:.2} s: max lateral {:.3} m (red {}), max heading {:.3} rad (red {})",
                        f.time[b - 1] - f.time[a],
                        lat,
                        lat_red,
                        head,
                        head_red
                    ),
                )
            })
            .collect();
        push_limited(list, &mut failures);
    }

    if cfg.enabled("car_started") && n > 0 {
        let dist = f.distance();
        if dist < cfg.min_distance {
            failures.push(f.failure(
                "car_started",
                n - 1,
                format!("covered {dist:.1} m, below the required {}", cfg.min_distance),
            ));
        }
    }

    if cfg.enabled("car_stopped") {
        let mask: Vec<bool> = (0..n)
            .map(|i| f.speed[i] < STANDSTILL && !f.safety_stopped[i] && !(f.v_target[i] <= STANDSTILL))
            .collect();
        let list = episodes(&mask)
            .into_iter()
            .filter(|(a, b)| f.time[b - 1] - f.time[*a] > MAX_STANDSTILL)
            .map(|(a, b)| {
                f.failure(
                    "car_stopped",
                    a,
                    format!("stationary for {:.2} s without a stop command", f.time[b - 1] - f.time[a]),
                )
            })
            .collect();
        push_limited(list, &mut failures);
    }

    if cfg.enabled("stack_errors") {
        let fatal = fatal_errors(errors, meta.suppress_window);
        // the safety node's own report follows the error that caused it
        let cause = fatal
            .iter()
            .find(|e| e.1 != codes::SAFETY_STOP)
            .or_else(|| fatal.first());
        if let Some((t_err, code, desc)) = cause {
            let from = f.time.partition_point(|t| t < t_err);
            let halted = (from..n).find(|&i| f.speed[i] < STANDSTILL);
            let min_boundary = (from..n).map(|i| f.boundary[i]).fold(f64::INFINITY, f64::min);
            let row = halted.unwrap_or(n.saturating_sub(1)).min(n.saturating_sub(1));
            match halted {
                Some(h) if min_boundary >= 0.0 => {
                    safety_stop = Some(SafetyStopRecord {
                        error_time: *t_err,
                        code: *code,
                        description: desc.clone(),
                        halted_at: f.time[h],
                        lap: f.lap[h],
                        s: f.s[h],
                        d: f.d[h],
                        min_boundary_distance: min_boundary,
                    });
                }
                _ if n > 0 => {
                    let why = if halted.is_none() { "vehicle never came to rest" } else { "vehicle left the track" };
                    failures.push(f.failure(
                        "stack_errors",
                        row,
                        format!("fatal error {code} at {t_err:.3} s ({desc}): {why}"),
                    ));
                }
                _ => {}
            }
        }
    }

    if cfg.enabled("track_boundaries") {
        let mask: Vec<bool> = f.boundary.iter().map(|b| *b < 0.0).collect();
        let list = episodes(&mask)
            .into_iter()
            .map(|(a, b)| {
                let worst = (a..b).map(|i| f.boundary[i]).fold(f64::INFINITY, f64::min);
                let duration = f.time[b - 1] - f.time[a];
                let text = if worst.is_finite() {
                    format!("off track for {duration:.2} s, worst boundary distance {worst:.3} m")
                } else {
                    format!("off track for {duration:.2} s, left the track map")
                };
                f.failure("track_boundaries", a, text)
            })
            .collect();
        push_limited(list, &mut failures);
    }

    if cfg.enabled("dynamics_metrics") {
        for (metric, recs) in dynamics {
            for (rec, arg) in recs {
                if let (Level::Red, Some(row), Some(max)) = (rec.level, arg, rec.max) {
                    let red = cfg.threshold(metric).map_or(f64::NAN, |t| t.red);
                    failures.push(f.failure(
                        "dynamics_metrics",
                        *row,
                        format!("{metric} {max:.3} exceeds red threshold {red} in lap {}", rec.lap),
                    ));
                }
            }
        }
    }

    if cfg.enabled("ghost_collisions") {
        let (len, wid) = (meta.vehicle.length, meta.vehicle.width);
        for g in &f.ghosts {
            let mask: Vec<bool> = (0..n)
                .map(|i| g.x[i].is_finite() && overlaps(&f.ego_footprint(i, len, wid), &g.footprint(i)))
                .collect();
            for (k, (a, b)) in episodes(&mask).into_iter().enumerate().take(MAX_FAILURES_PER_TEST) {
                let plot = format!("collision_{}_{k}.svg", g.id);
                failures.push(f.failure(
                    "ghost_collisions",
                    a,
                    format!("contact with {} for {:.2} s", g.id, f.time[b - 1] - f.time[a]),
                ));
                collisions.push(GhostCollision {
                    ghost: g.id.clone(),
                    row: a,
                    time: f.time[a],
                    lap: f.lap[a],
                    s: f.s[a],
                    d: known(f.d[a]),
                    plot,
                });
            }
        }
    }

    TestOutcome {
        failures,
        safety_stop,
        collisions,
    }
}

/// Overtake attempts per ghost: the signed gap (ego minus ghost, wrapped to
/// half a lap) crossing the start gap from below opens a window that closes
/// when the end gap is reached (completed) or the gap falls back below the
/// start (abandoned, not recorded). Contact inside the window marks the
/// record as a collision; a window still open at the end is recorded only if
/// contact occurred.
pub fn detect_overtakes(f: &Frame, ego_length: f64, ego_width: f64) -> Vec<OvertakeRecord> {
    let mut out = Vec::new();
    let half = f.track_length / 2.0;
    let wrap = |g: f64| {
        let mut d = g.rem_euclid(f.track_length);
        if d > half {
            d -= f.track_length;
        }
        d
    };
    for g in &f.ghosts {
        let gap: Vec<f64> = (0..f.len()).map(|i| wrap(f.s[i] - g.s[i])).collect();
        let cross = |i: usize, level: f64| {
            let (a, b) = (gap[i - 1], gap[i]);
            let frac = if b != a { ((level - a) / (b - a)).clamp(0.0, 1.0) } else { 1.0 };
            f.time[i - 1] + frac * (f.time[i] - f.time[i - 1])
        };
        let mut open: Option<(usize, f64, bool)> = None;
        let finish = |start: usize, t0: f64, end: usize, t1: f64, contact: bool| {
            let dv: Vec<f64> = finite((start..=end).map(|i| f.speed[i] - g.speed[i]));
            OvertakeRecord {
                ghost: g.id.clone(),
                outcome: if contact { OvertakeOutcome::Collision } else { OvertakeOutcome::Success },
                start_time: t0,
                start_lap: f.lap[start],
                start_s: f.s[start],
                end_lap: f.lap[end],
                end_s: f.s[end],
                time_to_overtake: t1 - t0,
                avg_delta_speed: mean_of(&dv),
            }
        };
        for i in 1..f.len() {
            if !(gap[i].is_finite() && gap[i - 1].is_finite()) {
                continue;
            }
            match open {
                None => {
                    if gap[i - 1] < OVERTAKE_START_GAP && gap[i] >= OVERTAKE_START_GAP && gap[i] - gap[i - 1] < half {
                        open = Some((i, cross(i, OVERTAKE_START_GAP), false));
                    }
                }
                Some((start, t0, contact)) => {
                    let contact = contact || overlaps(&f.ego_footprint(i, ego_length, ego_width), &g.footprint(i));
                    if gap[i] >= OVERTAKE_END_GAP {
                        out.push(finish(start, t0, i, cross(i, OVERTAKE_END_GAP), contact));
                        open = None;
                    } else if gap[i] < OVERTAKE_START_GAP {
                        if contact {
                            out.push(finish(start, t0, i, f.time[i], true));
                        }
                        open = None;
                    } else {
                        open = Some((start, t0, contact));
                    }
                }
            }
        }
        if let Some((start, t0, true)) = open {
            let end = f.len() - 1;
            out.push(finish(start, t0, end, f.time[end], true));
        }
    }
    out
}
