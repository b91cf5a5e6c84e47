use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::analysis::Frame;
use super::merge::nearest;
use super::report::{series_plot, GhostCollision, Svg};
use super::table::TopicTable;
use super::RunMeta;
use crate::plant::{CMD_ACTUATION, GPS_FIX, GT_ODOM, GT_OPPONENTS, LIO_ODOM, PERCEPTION_OPPONENTS, WHEEL_SPEED};
use crate::stack::{LOC_ODOM, PLAN_TRAJECTORY};
use crate::trackgeom::TrackModel;

/// Half-size of the collision schematic, m.
const VIEW: f64 = 25.0;

fn edges(track: &TrackModel, step: f64) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let line = track.line();
    let n = (line.total_length() / step).ceil() as usize;
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for k in 0..n {
        let s = k as f64 * step;
        let (p, nrm) = line.frame(s);
        let (wl, wr) = track.width_at(s);
        left.push([p[0] + wl * nrm[0], p[1] + wl * nrm[1]]);
        right.push([p[0] - wr * nrm[0], p[1] - wr * nrm[1]]);
    }
    (left, right)
}

/// Top-down schematic of a collision: track edges, both footprints and the
/// ego path over the preceding two seconds.
pub fn collision_svg(f: &Frame, c: &GhostCollision, track: &TrackModel, meta: &RunMeta) -> String {
    let row = c.row;
    let (cx, cy) = (f.x[row], f.y[row]);
    let mut svg = Svg::new([cx - VIEW, cy - VIEW], [cx + VIEW, cy + VIEW]);
    let near = |p: &[f64; 2]| (p[0] - cx).abs() <= VIEW * 1.5 && (p[1] - cy).abs() <= VIEW * 1.5;
    let (left, right) = edges(track, 1.0);
    for edge in [left, right] {
        let pts: Vec<[f64; 2]> = edge.into_iter().filter(near).collect();
        svg.polyline(&pts, "#444", 2.0);
    }
    let back = (2.0 / f.dt) as usize;
    let path: Vec<[f64; 2]> = (row.saturating_sub(back)..=row).map(|i| [f.x[i], f.y[i]]).collect();
    svg.polyline(&path, "#1f77b4", 1.0);
    let ego = f.ego_footprint(row, meta.vehicle.length, meta.vehicle.width);
    svg.polygon(&ego.corners(), "#1f77b4", "#1f77b4");
    if let Some(g) = f.ghosts.iter().find(|g| g.id == c.ghost) {
        svg.polygon(&g.footprint(row).corners(), "#d62728", "#d62728");
        svg.label([g.x[row], g.y[row] + 3.0], &g.id);
    }
    svg.label([cx - VIEW + 1.0, cy + VIEW - 2.0], &format!("t = {:.3} s, lap {}, s = {:.1} m", c.time, c.lap, c.s));
    svg.finish()
}

fn stats(v: &[f64]) -> (f64, f64) {
    let f: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if f.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    (mean, f.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

fn fmt(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.4}")
    } else {
        "-".into()
    }
}

/// Values of `col` in `table` sampled at the nearest row to each of `times`.
fn sample_at(table: &TopicTable, col: &str, times: &[f64]) -> Vec<f64> {
    match table.num(col) {
        Some(v) if !table.is_empty() => times.iter().map(|t| v[nearest(&table.timestamps, *t)]).collect(),
        _ => vec![f64::NAN; times.len()],
    }
}

/// Per-module markdown reports and plots, keyed by file name.
pub fn module_reports(f: &Frame, tables: &BTreeMap<String, TopicTable>) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let gt = tables.get(GT_ODOM);

    // localization
    let mut md = String::from("# Localization\n\n");
    if let (Some(loc), Some(gt)) = (tables.get(LOC_ODOM), gt) {
        let t = &loc.timestamps;
        let gx = sample_at(gt, "x", t);
        let gy = sample_at(gt, "y", t);
        let err: Vec<f64> = (0..loc.len())
            .map(|i| {
                let px = loc.num("pose.position.0").map_or(f64::NAN, |v| v[i]);
                let py = loc.num("pose.position.1").map_or(f64::NAN, |v| v[i]);
                (px - gx[i]).hypot(py - gy[i])
            })
            .collect();
        let cov: Vec<f64> = (0..loc.len())
            .map(|i| {
                let a = loc.num("pose.covariance.0").map_or(f64::NAN, |v| v[i]);
                let b = loc.num("pose.covariance.1").map_or(f64::NAN, |v| v[i]);
                a.max(b)
            })
            .collect();
        let (em, ex) = stats(&err);
        let (cm, cx) = stats(&cov);
        let _ = writeln!(md, "| quantity | mean | max |\n|---|---|---|");
        let _ = writeln!(md, "| position error, m | {} | {} |", fmt(em), fmt(ex));
        let _ = writeln!(md, "| position variance, m² | {} | {} |\n", fmt(cm), fmt(cx));
        out.insert(
            "localization_error.svg".into(),
            series_plot("localization", t, &[("position error [m]", &err, "#1f77b4"), ("variance [m²]", &cov, "#d62728")]),
        );
        let _ = writeln!(md, "![](localization_error.svg)\n");
    }
    let _ = writeln!(md, "## Sensor streams\n\n| topic | messages | rate, Hz | mean delay, s | max delay, s |\n|---|---|---|---|---|");
    for (topic, table) in tables {
        let sensor = topic == GPS_FIX || topic == LIO_ODOM || topic == WHEEL_SPEED || topic.starts_with("/imu/");
        if !sensor || topic.ends_with("/_raw") {
            continue;
        }
        let delay: Vec<f64> = match table.num("stamp") {
            Some(st) => table.timestamps.iter().zip(st).map(|(t, s)| t - s).collect(),
            None => Vec::new(),
        };
        let (dm, dx) = stats(&delay);
        let _ = writeln!(
            md,
            "| {topic} | {} | {} | {} | {} |",
            table.len(),
            fmt(table.frequency()),
            fmt(dm),
            fmt(dx)
        );
    }
    out.insert("localization.md".into(), md);

    // control
    let mut md = String::from("# Control\n\n");
    let (lm, lx) = stats(&f.lateral_error.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let (hm, hx) = stats(&f.heading_error.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let speed_err: Vec<f64> = f.speed.iter().zip(&f.v_target).map(|(v, t)| (v - t).abs()).collect();
    let (sm, sx) = stats(&speed_err);
    let _ = writeln!(md, "| quantity | mean | max |\n|---|---|---|");
    let _ = writeln!(md, "| lateral error, m | {} | {} |", fmt(lm), fmt(lx));
    let _ = writeln!(md, "| heading error, rad | {} | {} |", fmt(hm), fmt(hx));
    let _ = writeln!(md, "| speed error, m/s | {} | {} |", fmt(sm), fmt(sx));
    if let Some(cmd) = tables.get(CMD_ACTUATION) {
        let commanded = sample_at(cmd, "steer", &f.time);
        let lag: Vec<f64> = commanded.iter().zip(&f.steer).map(|(c, s)| (c - s).abs()).collect();
        let (gm, gx) = stats(&lag);
        let _ = writeln!(md, "| steering command minus actual, rad | {} | {} |", fmt(gm), fmt(gx));
    }
    md.push('\n');
    out.insert(
        "control_tracking.svg".into(),
        series_plot("tracking", &f.time, &[("lateral error [m]", &f.lateral_error, "#1f77b4")]),
    );
    out.insert(
        "control_speed.svg".into(),
        series_plot(
            "speed",
            &f.time,
            &[("speed [m/s]", &f.speed, "#1f77b4"), ("target [m/s]", &f.v_target, "#2ca02c")],
        ),
    );
    let _ = writeln!(md, "![](control_tracking.svg)\n\n![](control_speed.svg)\n");
    out.insert("control.md".into(), md);

    // planning
    let mut md = String::from("# Planning\n\n");
    if let Some(plan) = tables.get(PLAN_TRAJECTORY) {
        if let Some(mode) = plan.num("mode") {
            let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
            for m in mode {
                *counts.entry(m.round() as i64).or_default() += 1;
            }
            let _ = writeln!(md, "| mode | share |\n|---|---|");
            for (m, c) in counts {
                let _ = writeln!(md, "| {m} | {:.3} |", c as f64 / plan.len().max(1) as f64);
            }
            md.push('\n');
        }
        if let Some(off) = plan.num("offset") {
            out.insert(
                "planning_offset.svg".into(),
                series_plot("planned offset", &plan.timestamps, &[("offset [m]", off, "#9467bd")]),
            );
            let _ = writeln!(md, "![](planning_offset.svg)\n");
        }
    }
    out.insert("planning.md".into(), md);

    // perception, only with opponents
    if let (Some(det), Some(truth)) = (tables.get(PERCEPTION_OPPONENTS), tables.get(GT_OPPONENTS)) {
        let mut md = String::from("# Perception\n\n| opponent | mean error, m | max error, m | mean latency, s |\n|---|---|---|---|\n");
        for (i, g) in f.ghosts.iter().enumerate() {
            let (xc, yc) = (format!("x.{i}"), format!("y.{i}"));
            let tx = sample_at(truth, &xc, &det.timestamps);
            let ty = sample_at(truth, &yc, &det.timestamps);
            let err: Vec<f64> = match (det.num(&xc), det.num(&yc)) {
                (Some(dx), Some(dy)) => (0..det.len()).map(|k| (dx[k] - tx[k]).hypot(dy[k] - ty[k])).collect(),
                _ => Vec::new(),
            };
            let latency: Vec<f64> = match det.num("stamp") {
                Some(st) => det.timestamps.iter().zip(st).map(|(t, s)| t - s).collect(),
                None => Vec::new(),
            };
            let (em, ex) = stats(&err);
            let (lm, _) = stats(&latency);
            let _ = writeln!(md, "| {} | {} | {} | {} |", g.id, fmt(em), fmt(ex), fmt(lm));
        }
        out.insert("perception.md".into(), md);
    }
    out
}
