//! Track geometry and Frenet/Cartesian conversion.
//!
//! Lateral offsets are left-positive. Arc length on closed tracks is taken
//! modulo the track length. Vehicles are spawned by [`reproject_init`]: a pose
//! given on the racing line is mapped to Cartesian space and then projected
//! back onto the centerline.

mod index;
mod line;

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

pub use line::{wrap_angle, ReferenceLine};

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("too few points for a line: {0}")]
    TooFewPoints(usize),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("segment {0} has zero length")]
    DegenerateSegment(usize),
    #[error("per-point columns differ in length from the point list")]
    LengthMismatch,
    #[error("track width must be positive at row {0}")]
    BadWidth(usize),
    #[error("point ({x:.3}, {y:.3}) is beyond the capture distance of the line")]
    OutOfCapture { x: f64, y: f64 },
    #[error("reading {path}: {source}")]
    Csv { path: String, source: csv::Error },
}

/// Pose relative to a reference line: arc length, left-positive lateral
/// offset and heading relative to the line tangent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize, serde::Serialize)]
pub struct FrenetPose {
    pub s: f64,
    pub d: f64,
    pub mu: f64,
}

/// Closed centerline with per-vertex widths.
#[derive(Debug, Clone)]
pub struct TrackModel {
    line: ReferenceLine,
    w_left: Vec<f64>,
    w_right: Vec<f64>,
}

impl TrackModel {
    /// Build a closed track. The capture distance defaults to twice the
    /// widest cross-section.
    pub fn new(points: Vec<[f64; 2]>, w_left: Vec<f64>, w_right: Vec<f64>) -> Result<Self, GeomError> {
        let max_w = w_left
            .iter()
            .zip(&w_right)
            .map(|(l, r)| l + r)
            .fold(0.0, f64::max);
        Self::with_capture(points, w_left, w_right, 2.0 * max_w)
    }

    pub fn with_capture(
        points: Vec<[f64; 2]>,
        w_left: Vec<f64>,
        w_right: Vec<f64>,
        capture: f64,
    ) -> Result<Self, GeomError> {
        if w_left.len() != points.len() || w_right.len() != points.len() {
            return Err(GeomError::LengthMismatch);
        }
        if let Some(i) = (0..points.len()).find(|&i| !(w_left[i] > 0.0 && w_right[i] > 0.0)) {
            return Err(GeomError::BadWidth(i));
        }
        Ok(Self {
            line: ReferenceLine::new(points, true, capture)?,
            w_left,
            w_right,
        })
    }

    /// Load a `x,y,w_left,w_right` CSV; the track is implicitly closed.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self, GeomError> {
        #[derive(Deserialize)]
        struct Row {
            x: f64,
            y: f64,
            w_left: f64,
            w_right: f64,
        }
        let rows: Vec<Row> = read_rows(path.as_ref())?;
        let (mut pts, mut wl, mut wr) = (Vec::new(), Vec::new(), Vec::new());
        for r in rows {
            pts.push([r.x, r.y]);
            wl.push(r.w_left);
            wr.push(r.w_right);
        }
        Self::new(pts, wl, wr)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), GeomError> {
        let p = path.as_ref();
        let csv_err = |source| GeomError::Csv {
            path: p.display().to_string(),
            source,
        };
        let mut w = csv::Writer::from_path(p).map_err(csv_err)?;
        w.write_record(["x", "y", "w_left", "w_right"]).map_err(csv_err)?;
        for (i, pt) in self.line.points().iter().enumerate() {
            w.serialize((pt[0], pt[1], self.w_left[i], self.w_right[i]))
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| csv_err(e.into()))
    }

    pub fn line(&self) -> &ReferenceLine {
        &self.line
    }

    pub fn total_length(&self) -> f64 {
        self.line.total_length()
    }

    pub fn widths(&self) -> (&[f64], &[f64]) {
        (&self.w_left, &self.w_right)
    }

    /// Left and right widths interpolated at `s`.
    pub fn width_at(&self, s: f64) -> (f64, f64) {
        let s = self.line.normalize_s(s);
        let cum = self.line.cum_s();
        let n = cum.len();
        let i = cum.partition_point(|&c| c <= s).saturating_sub(1);
        let j = (i + 1) % n;
        let end = if j == 0 { self.total_length() } else { cum[j] };
        let t = ((s - cum[i]) / (end - cum[i])).clamp(0.0, 1.0);
        (
            self.w_left[i] + t * (self.w_left[j] - self.w_left[i]),
            self.w_right[i] + t * (self.w_right[j] - self.w_right[i]),
        )
    }

    pub fn frenet_to_cartesian(&self, pose: &FrenetPose) -> (f64, f64, f64) {
        self.line.frenet_to_cartesian(pose)
    }

    pub fn cartesian_to_frenet(&self, x: f64, y: f64, yaw: f64) -> Result<FrenetPose, GeomError> {
        self.line.cartesian_to_frenet(x, y, yaw)
    }

    /// Signed distance to the nearer track edge; negative outside.
    pub fn distance_to_boundary(&self, x: f64, y: f64) -> Result<f64, GeomError> {
        let p = self.cartesian_to_frenet(x, y, 0.0)?;
        let (wl, wr) = self.width_at(p.s);
        Ok((wl - p.d).min(wr + p.d))
    }
}

/// Closed racing line with a target speed per point.
#[derive(Debug, Clone)]
pub struct RacingLine {
    line: ReferenceLine,
    speed: Vec<f64>,
}

impl RacingLine {
    pub fn new(points: Vec<[f64; 2]>, speed: Vec<f64>, capture: f64) -> Result<Self, GeomError> {
        if speed.len() != points.len() {
            return Err(GeomError::LengthMismatch);
        }
        Ok(Self {
            line: ReferenceLine::new(points, true, capture)?,
            speed,
        })
    }

    /// Load an `x,y,v` CSV.
    pub fn from_csv(path: impl AsRef<Path>, capture: f64) -> Result<Self, GeomError> {
        #[derive(Deserialize)]
        struct Row {
            x: f64,
            y: f64,
            v: f64,
        }
        let rows: Vec<Row> = read_rows(path.as_ref())?;
        let pts = rows.iter().map(|r| [r.x, r.y]).collect();
        let v = rows.iter().map(|r| r.v).collect();
        Self::new(pts, v, capture)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), GeomError> {
        let p = path.as_ref();
        let csv_err = |source| GeomError::Csv {
            path: p.display().to_string(),
            source,
        };
        let mut w = csv::Writer::from_path(p).map_err(csv_err)?;
        w.write_record(["x", "y", "v"]).map_err(csv_err)?;
        for (pt, v) in self.line.points().iter().zip(&self.speed) {
            w.serialize((pt[0], pt[1], v)).map_err(csv_err)?;
        }
        w.flush().map_err(|e| csv_err(e.into()))
    }

    pub fn line(&self) -> &ReferenceLine {
        &self.line
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speed
    }

    /// Target speed interpolated at `s`.
    pub fn speed_at(&self, s: f64) -> f64 {
        let s = self.line.normalize_s(s);
        let cum = self.line.cum_s();
        let n = cum.len();
        let i = cum.partition_point(|&c| c <= s).saturating_sub(1);
        let j = (i + 1) % n;
        let end = if j == 0 { self.line.total_length() } else { cum[j] };
        let t = ((s - cum[i]) / (end - cum[i])).clamp(0.0, 1.0);
        self.speed[i] + t * (self.speed[j] - self.speed[i])
    }
}

/// Spawn pose w.r.t. the centerline of a pose given on the racing line.
pub fn reproject_init(
    center: &TrackModel,
    traj: &RacingLine,
    pose_on_traj: &FrenetPose,
) -> Result<FrenetPose, GeomError> {
    let (x, y, yaw) = traj.line().frenet_to_cartesian(pose_on_traj);
    center.cartesian_to_frenet(x, y, yaw)
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, GeomError> {
    let csv_err = |source| GeomError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err)
}

/// Stadium-shaped closed line: two straights joined by semicircles,
/// counter-clockwise, starting at the beginning of the bottom straight.
pub fn stadium_points(straight: f64, radius: f64, spacing: f64) -> Vec<[f64; 2]> {
    use std::f64::consts::PI;
    let mut pts = Vec::new();
    let n_str = (straight / spacing).round().max(1.0) as usize;
    let n_arc = (PI * radius / spacing).round().max(2.0) as usize;
    for k in 0..n_str {
        pts.push([straight * k as f64 / n_str as f64, -radius]);
    }
    for k in 0..n_arc {
        let a = -PI / 2.0 + PI * k as f64 / n_arc as f64;
        pts.push([straight + radius * a.cos(), radius * a.sin()]);
    }
    for k in 0..n_str {
        pts.push([straight - straight * k as f64 / n_str as f64, radius]);
    }
    for k in 0..n_arc {
        let a = PI / 2.0 + PI * k as f64 / n_arc as f64;
        pts.push([radius * a.cos(), radius * a.sin()]);
    }
    pts
}

#[cfg(test)]
mod tests;
