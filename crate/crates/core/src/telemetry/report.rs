use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::simbus::StopReason;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Ok,
    Yellow,
    Red,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFailure {
    pub test: String,
    pub description: String,
    pub time: f64,
    pub lap: u32,
    pub s: f64,
    /// Lateral offset; absent when the car was off the track map.
    pub d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyStopRecord {
    pub error_time: f64,
    pub code: u32,
    pub description: String,
    pub halted_at: f64,
    pub lap: u32,
    pub s: f64,
    pub d: f64,
    pub min_boundary_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct General {
    pub scenario: String,
    pub seed: u64,
    pub tags: Vec<String>,
    pub stop_reason: StopReason,
    pub end_time: f64,
    pub trace_digest: String,
    pub passed: bool,
    pub tests: Vec<String>,
    pub distance: f64,
    pub laps_completed: u32,
    pub best_lap_time: Option<f64>,
    pub max_speed: Option<f64>,
    /// A fatal stack error that ended in a completed stop on track.
    pub safety_stop: Option<SafetyStopRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapRecord {
    pub lap: u32,
    pub complete: bool,
    pub time: Option<f64>,
    pub max_speed: Option<f64>,
    pub avg_speed: Option<f64>,
    pub mean_lateral_error: Option<f64>,
    pub max_lateral_error: Option<f64>,
    pub max_heading_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRecord {
    pub lap: u32,
    /// Largest magnitude in the lap.
    pub max: Option<f64>,
    /// Mean magnitude.
    pub avg: Option<f64>,
    pub level: Level,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhostCollision {
    pub ghost: String,
    #[serde(skip)]
    pub row: usize,
    pub time: f64,
    pub lap: u32,
    pub s: f64,
    pub d: Option<f64>,
    pub plot: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OvertakeOutcome {
    Success,
    Collision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvertakeRecord {
    pub ghost: String,
    pub outcome: OvertakeOutcome,
    pub start_time: f64,
    pub start_lap: u32,
    pub start_s: f64,
    pub end_lap: u32,
    pub end_s: f64,
    pub time_to_overtake: f64,
    /// Mean ego minus ghost speed over the window, m/s.
    pub avg_delta_speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhostSection {
    pub collisions: Vec<GhostCollision>,
    pub overtakes: Vec<OvertakeRecord>,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub general: General,
    pub errors: Vec<TestFailure>,
    pub laps: Vec<LapRecord>,
    pub dynamics: BTreeMap<String, Vec<DynamicsRecord>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ghosts: Option<GhostSection>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn errors_of<'a>(&'a self, test: &'a str) -> impl Iterator<Item = &'a TestFailure> {
        self.errors.iter().filter(move |e| e.test == test)
    }

    pub fn to_markdown(&self) -> String {
        let g = &self.general;
        let mut md = String::new();
        let verdict = if g.passed { "PASSED" } else { "FAILED" };
        let _ = writeln!(md, "# Run report: {}\n", g.scenario);
        let _ = writeln!(md, "**{verdict}**\n");
        let _ = writeln!(md, "| | |\n|---|---|");
        let _ = writeln!(md, "| seed | {} |", g.seed);
        if !g.tags.is_empty() {
            let _ = writeln!(md, "| tags | {} |", g.tags.join(", "));
        }
        let _ = writeln!(md, "| stop reason | {:?} |", g.stop_reason);
        let _ = writeln!(md, "| end time | {:.3} s |", g.end_time);
        let _ = writeln!(md, "| distance | {:.1} m |", g.distance);
        let _ = writeln!(md, "| laps completed | {} |", g.laps_completed);
        let _ = writeln!(md, "| best lap | {} |", opt(g.best_lap_time, 3, " s"));
        let _ = writeln!(md, "| max speed | {} |", opt(g.max_speed, 2, " m/s"));
        let _ = writeln!(md, "| tests | {} |", g.tests.join(", "));
        let _ = writeln!(md, "| trace digest | `{}` |\n", g.trace_digest);

        if let Some(st) = &g.safety_stop {
            let _ = writeln!(md, "## Safety stop\n");
            let _ = writeln!(
                md,
                "Fatal error {} at {:.3} s ({}). Vehicle at rest at {:.3} s, lap {}, s = {:.1} m, d = {:.2} m; \
                 closest approach to the track edge {:.2} m.\n",
                st.code, st.error_time, st.description, st.halted_at, st.lap, st.s, st.d, st.min_boundary_distance
            );
        }

        let _ = writeln!(md, "## Test failures\n");
        if self.errors.is_empty() {
            let _ = writeln!(md, "None.\n");
        } else {
            let _ = writeln!(md, "| test | time | lap | s | d | description |\n|---|---|---|---|---|---|");
            for e in &self.errors {
                let _ = writeln!(
                    md,
                    "| ✖ {} | {:.3} | {} | {:.1} | {} | {} |",
                    e.test,
                    e.time,
                    e.lap,
                    e.s,
                    opt(e.d, 2, ""),
                    e.description
                );
            }
            md.push('\n');
        }

        let _ = writeln!(md, "## Laps\n");
        let _ = writeln!(
            md,
            "| lap | time | max speed | avg speed | mean lat. err | max lat. err | max heading err |\n\
             |---|---|---|---|---|---|---|"
        );
        for l in &self.laps {
            let lap = if l.complete { l.lap.to_string() } else { format!("{} (partial)", l.lap) };
            let _ = writeln!(
                md,
                "| {lap} | {} | {} | {} | {} | {} | {} |",
                opt(l.time, 3, ""),
                opt(l.max_speed, 2, ""),
                opt(l.avg_speed, 2, ""),
                opt(l.mean_lateral_error, 3, ""),
                opt(l.max_lateral_error, 3, ""),
                opt(l.max_heading_error, 4, "")
            );
        }
        md.push('\n');

        let _ = writeln!(md, "## Dynamics\n");
        let _ = writeln!(md, "| metric | lap | max | avg |\n|---|---|---|---|");
        for (metric, recs) in &self.dynamics {
            for r in recs {
                let mark = match r.level {
                    Level::Ok => "",
                    Level::Yellow => "⚠ ",
                    Level::Red => "✖ ",
                };
                let _ = writeln!(
                    md,
                    "| {metric} | {} | {mark}{} | {} |",
                    r.lap,
                    opt(r.max, 3, ""),
                    opt(r.avg, 3, "")
                );
            }
        }
        md.push('\n');

        if let Some(gs) = &self.ghosts {
            let _ = writeln!(md, "## Opponents\n");
            let _ = writeln!(md, "### Overtakes\n");
            if gs.overtakes.is_empty() {
                let _ = writeln!(md, "None.\n");
            } else {
                let _ = writeln!(
                    md,
                    "| ghost | outcome | start time | start (lap, s) | end (lap, s) | duration | avg Δv |\n|---|---|---|---|---|---|---|"
                );
                for o in &gs.overtakes {
                    let _ = writeln!(
                        md,
                        "| {} | {:?} | {:.3} | ({}, {:.1}) | ({}, {:.1}) | {:.3} | {} |",
                        o.ghost,
                        o.outcome,
                        o.start_time,
                        o.start_lap,
                        o.start_s,
                        o.end_lap,
                        o.end_s,
                        o.time_to_overtake,
                        opt(o.avg_delta_speed, 2, "")
                    );
                }
                md.push('\n');
            }
            let _ = writeln!(md, "### Collisions\n");
            if gs.collisions.is_empty() {
                let _ = writeln!(md, "None.\n");
            } else {
                for c in &gs.collisions {
                    let _ = writeln!(
                        md,
                        "- ✖ {} at {:.3} s, lap {}, s = {:.1} m: ![]({})",
                        c.ghost,
                        c.time,
                        c.lap,
                        c.s,
                        super::PLOTS_DIR.to_owned() + "/" + &c.plot
                    );
                }
                md.push('\n');
            }
        }
        md
    }
}

fn opt(v: Option<f64>, digits: usize, unit: &str) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.digits$}{unit}"),
        _ => "-".into(),
    }
}

/// Minimal SVG canvas in world coordinates (y up).
pub struct Svg {
    min: [f64; 2],
    max: [f64; 2],
    body: String,
    scale: f64,
}

impl Svg {
    pub const SIZE: f64 = 600.0;

    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        let span = (max[0] - min[0]).max(max[1] - min[1]).max(1e-9);
        Self {
            min,
            max,
            body: String::new(),
            scale: Self::SIZE / span,
        }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        ((p[0] - self.min[0]) * self.scale, Self::SIZE - (p[1] - self.min[1]) * self.scale)
    }

    pub fn polyline(&mut self, pts: &[[f64; 2]], color: &str, width: f64) {
        self.shape("polyline", pts, color, width, "none");
    }

    pub fn polygon(&mut self, pts: &[[f64; 2]], color: &str, fill: &str) {
        self.shape("polygon", pts, color, 1.0, fill);
    }

    fn shape(&mut self, tag: &str, pts: &[[f64; 2]], color: &str, width: f64, fill: &str) {
        let coords: Vec<String> = pts
            .iter()
            .filter(|p| p[0].is_finite() && p[1].is_finite())
            .map(|p| {
                let (x, y) = self.map(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        if coords.is_empty() {
            return;
        }
        let _ = writeln!(
            self.body,
            r#"<{tag} points="{}" fill="{fill}" fill-opacity="0.5" stroke="{color}" stroke-width="{width}"/>"#,
            coords.join(" ")
        );
    }

    pub fn label(&mut self, p: [f64; 2], text: &str) {
        let (x, y) = self.map(p);
        let _ = writeln!(self.body, r#"<text x="{x:.2}" y="{y:.2}" font-size="12">{text}</text>"#);
    }

    pub fn finish(self) -> String {
        let w = ((self.max[0] - self.min[0]) * self.scale).max(1.0);
        let h = ((self.max[1] - self.min[1]) * self.scale).max(1.0);
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 {:.2} {w:.2} {h:.2}\">\n\
             <rect x=\"0\" y=\"{:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"white\"/>\n{}</svg>\n",
            Self::SIZE - h,
            Self::SIZE - h,
            self.body
        )
    }
}

/// Time series plot of named series sharing an x axis.
pub fn series_plot(title: &str, x: &[f64], series: &[(&str, &[f64], &str)]) -> String {
    let (w, h, pad) = (800.0, 300.0, 40.0);
    let finite = |v: &[f64]| v.iter().copied().filter(|x| x.is_finite()).collect::<Vec<_>>();
    let xs = finite(x);
    let ys: Vec<f64> = series.iter().flat_map(|(_, v, _)| finite(v)).collect();
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let mut body = String::new();
    for (k, (name, v, color)) in series.iter().enumerate() {
        let pts: Vec<String> = x
            .iter()
            .zip(v.iter())
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| {
                let px = pad + (a - x0) / (x1 - x0) * (w - 2.0 * pad);
                let py = h - pad - (b - y0) / (y1 - y0) * (h - 2.0 * pad);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            body,
            r#"<text x="{:.0}" y="{:.0}" font-size="12" fill="{color}">{name}</text>"#,
            w - pad - 150.0,
            pad + 14.0 * k as f64
        );
    }
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{pad}\" y=\"20\" font-size=\"14\">{title}</text>\n\
         <text x=\"{pad}\" y=\"{:.0}\" font-size=\"10\">{x0:.1}</text>\n\
         <text x=\"{:.0}\" y=\"{:.0}\" font-size=\"10\">{x1:.1}</text>\n\
         <text x=\"2\" y=\"{pad}\" font-size=\"10\">{y1:.3}</text>\n\
         <text x=\"2\" y=\"{:.0}\" font-size=\"10\">{y0:.3}</text>\n\
         <rect x=\"{pad}\" y=\"{pad}\" width=\"{:.0}\" height=\"{:.0}\" fill=\"none\" stroke=\"#888\"/>\n{body}</svg>\n",
        h - pad + 14.0,
        w - pad - 20.0,
        h - pad + 14.0,
        h - pad,
        w - 2.0 * pad,
        h - 2.0 * pad,
    )
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}
