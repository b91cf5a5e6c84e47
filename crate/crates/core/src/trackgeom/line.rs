//! Closed or open reference polylines with a continuous Frenet frame.
//!
//! Between vertices `i` and `i+1` the base point moves linearly with arc
//! length while the left normal is the linear blend of the two vertex
//! normals. Vertex normals come from central-difference headings. The blended
//! normal makes the lateral coordinate continuous across vertices, so the
//! Frenet map and its inverse round-trip exactly wherever `|d|` stays below
//! the local radius of curvature.

use std::f64::consts::PI;

use super::index::SegmentGrid;
use super::{FrenetPose, GeomError};

pub(crate) type Vec2 = [f64; 2];

#[inline]
pub(crate) fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub(crate) fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

/// Wrap an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Foot point of a query on a specific segment.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Foot {
    pub segment: usize,
    pub t: f64,
    pub s: f64,
    pub d: f64,
}

#[derive(Debug, Clone)]
pub struct ReferenceLine {
    points: Vec<Vec2>,
    cum_s: Vec<f64>,
    heading: Vec<f64>,
    normals: Vec<Vec2>,
    closed: bool,
    total_length: f64,
    grid: SegmentGrid,
    capture: f64,
}

impl ReferenceLine {
    /// Build a line from ordered points. Closed lines must not repeat the
    /// first point at the end. `capture` bounds the lateral distance accepted
    /// by projections.
    pub fn new(points: Vec<Vec2>, closed: bool, capture: f64) -> Result<Self, GeomError> {
        let min_pts = if closed { 3 } else { 2 };
        if points.len() < min_pts {
            return Err(GeomError::TooFewPoints(points.len()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        let n = points.len();
        let nseg = if closed { n } else { n - 1 };
        let mut cum_s = Vec::with_capacity(n + 1);
        cum_s.push(0.0);
        for i in 0..nseg {
            let a = points[i];
            let b = points[(i + 1) % n];
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            if len <= 1e-9 {
                return Err(GeomError::DegenerateSegment(i));
            }
            cum_s.push(cum_s[i] + len);
        }
        let total_length = cum_s[nseg];

        let heading: Vec<f64> = (0..n)
            .map(|i| {
                let (prev, next) = if closed {
                    (points[(i + n - 1) % n], points[(i + 1) % n])
                } else if i == 0 {
                    (points[0], points[1])
                } else if i == n - 1 {
                    (points[n - 2], points[n - 1])
                } else {
                    (points[i - 1], points[i + 1])
                };
                (next[1] - prev[1]).atan2(next[0] - prev[0])
            })
            .collect();
        let normals = heading.iter().map(|h| [-h.sin(), h.cos()]).collect();

        let grid = SegmentGrid::build(&points, closed, capture);
        Ok(Self {
            points,
            cum_s,
            heading,
            normals,
            closed,
            total_length,
            grid,
            capture,
        })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn cum_s(&self) -> &[f64] {
        &self.cum_s[..self.points.len()]
    }

    pub fn vertex_headings(&self) -> &[f64] {
        &self.heading
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn capture_distance(&self) -> f64 {
        self.capture
    }

    pub fn segment_count(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    /// Normalize `s` into `[0, total_length)` for closed lines; clamp for
    /// open ones.
    pub fn normalize_s(&self, s: f64) -> f64 {
        if self.closed {
            let w = s.rem_euclid(self.total_length);
            if w >= self.total_length {
                0.0
            } else {
                w
            }
        } else {
            s.clamp(0.0, self.total_length)
        }
    }

    /// Signed shortest difference `a - b` along a closed line, in
    /// `(-L/2, L/2]`.
    pub fn s_diff(&self, a: f64, b: f64) -> f64 {
        if !self.closed {
            return a - b;
        }
        let l = self.total_length;
        let mut d = (a - b).rem_euclid(l);
        if d > l / 2.0 {
            d -= l;
        }
        d
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let s = self.normalize_s(s);
        let nseg = self.segment_count();
        // last index with cum_s[i] <= s
        let i = match self.cum_s[..=nseg].binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
        .min(nseg - 1);
        let len = self.cum_s[i + 1] - self.cum_s[i];
        (i, ((s - self.cum_s[i]) / len).clamp(0.0, 1.0))
    }

    pub(crate) fn segment_ends(&self, i: usize) -> (Vec2, Vec2, Vec2, Vec2) {
        let j = (i + 1) % self.points.len();
        (self.points[i], self.points[j], self.normals[i], self.normals[j])
    }

    fn frame_at(&self, i: usize, t: f64) -> (Vec2, Vec2) {
        let (p0, p1, n0, n1) = self.segment_ends(i);
        let p = [p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])];
        let n = [n0[0] + t * (n1[0] - n0[0]), n0[1] + t * (n1[1] - n0[1])];
        let len = n[0].hypot(n[1]);
        (p, [n[0] / len, n[1] / len])
    }

    /// Base point and unit left normal at arc length `s`.
    pub fn frame(&self, s: f64) -> (Vec2, Vec2) {
        let (i, t) = self.locate(s);
        self.frame_at(i, t)
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        self.frame(s).0
    }

    /// Reference heading at `s` (tangent of the continuous frame).
    pub fn heading_at(&self, s: f64) -> f64 {
        let (_, n) = self.frame(s);
        n[1].atan2(n[0]) - PI / 2.0
    }

    /// Curvature at `s` from the finite difference of vertex headings,
    /// interpolated along the segment.
    pub fn curvature_at(&self, s: f64) -> f64 {
        let (i, t) = self.locate(s);
        let j = (i + 1) % self.points.len();
        (1.0 - t) * self.vertex_curvature(i) + t * self.vertex_curvature(j)
    }

    fn vertex_curvature(&self, i: usize) -> f64 {
        let n = self.points.len();
        if !self.closed && (i == 0 || i == n - 1) {
            let (a, b) = if i == 0 { (0, 1) } else { (n - 2, n - 1) };
            return wrap_angle(self.heading[b] - self.heading[a]) / (self.cum_s[b] - self.cum_s[a]);
        }
        let prev = (i + n - 1) % n;
        let next = (i + 1) % n;
        let ds_prev = if i == 0 {
            self.total_length - self.cum_s[prev]
        } else {
            self.cum_s[i] - self.cum_s[prev]
        };
        let ds_next = self.cum_s[i + 1] - self.cum_s[i];
        wrap_angle(self.heading[next] - self.heading[prev]) / (ds_prev + ds_next)
    }

    /// Cartesian pose of a Frenet pose on this line.
    pub fn frenet_to_cartesian(&self, pose: &FrenetPose) -> (f64, f64, f64) {
        let (p, n) = self.frame(pose.s);
        let heading = n[1].atan2(n[0]) - PI / 2.0;
        (
            p[0] + pose.d * n[0],
            p[1] + pose.d * n[1],
            wrap_angle(heading + pose.mu),
        )
    }

    /// Frenet pose of a Cartesian pose; fails beyond the capture distance.
    pub fn cartesian_to_frenet(&self, x: f64, y: f64, yaw: f64) -> Result<FrenetPose, GeomError> {
        let foot = self.project([x, y])?;
        let (_, n) = self.frame_at(foot.segment, foot.t);
        let heading = n[1].atan2(n[0]) - PI / 2.0;
        Ok(FrenetPose {
            s: self.normalize_s(foot.s),
            d: foot.d,
            mu: wrap_angle(yaw - heading),
        })
    }

    /// Closest foot point among the segments indexed near `q`.
    pub(crate) fn project(&self, q: Vec2) -> Result<Foot, GeomError> {
        let mut best: Option<Foot> = None;
        for seg in self.grid.candidates(q) {
            for foot in self.feet_on_segment(seg, q) {
                if foot.d.abs() > self.capture {
                    continue;
                }
                best = Some(match best {
                    None => foot,
                    Some(b) => pick(b, foot, self),
                });
            }
        }
        best.ok_or(GeomError::OutOfCapture { x: q[0], y: q[1] })
    }

    /// Every foot point of `q` on segment `i`: parameters `t` in [0, 1]
    /// where `q - P(t)` is parallel to the blended normal `N(t)`.
    pub(crate) fn feet_on_segment(&self, i: usize, q: Vec2) -> Vec<Foot> {
        let (p0, p1, n0, n1) = self.segment_ends(i);
        let dseg = sub(p1, p0);
        let dn = sub(n1, n0);
        let w0 = sub(q, p0);
        // cross(N(t), q - P(t)) = a t^2 + b t + c
        let a = -cross(dn, dseg);
        let b = cross(dn, w0) - cross(n0, dseg);
        let c = cross(n0, w0);
        let mut roots: Vec<f64> = Vec::with_capacity(2);
        let scale = b.abs().max(c.abs()).max(1e-300);
        if a.abs() <= 1e-12 * scale {
            if b != 0.0 {
                roots.push(-c / b);
            }
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                let qv = -0.5 * (b + b.signum() * sq);
                if qv != 0.0 {
                    roots.push(qv / a);
                    roots.push(c / qv);
                } else {
                    roots.push(0.0);
                }
            }
        }
        const EPS: f64 = 1e-12;
        let len = self.cum_s[i + 1] - self.cum_s[i];
        roots
            .into_iter()
            .filter(|t| (-EPS..=1.0 + EPS).contains(t))
            .map(|t| {
                let t = t.clamp(0.0, 1.0);
                let (p, n) = self.frame_at(i, t);
                Foot {
                    segment: i,
                    t,
                    s: self.cum_s[i] + t * len,
                    d: dot(sub(q, p), n),
                }
            })
            .collect()
    }
}

/// Closest wins; near-ties go to the smaller normalized `s`.
fn pick(a: Foot, b: Foot, line: &ReferenceLine) -> Foot {
    const TIE: f64 = 1e-9;
    let (da, db) = (a.d.abs(), b.d.abs());
    if db < da - TIE {
        b
    } else if da < db - TIE {
        a
    } else if line.normalize_s(b.s) < line.normalize_s(a.s) {
        b
    } else {
        a
    }
}
