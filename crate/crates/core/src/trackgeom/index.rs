use super::line::Vec2;

/// Uniform grid over segment bounding boxes, each box grown by the capture
/// distance so a lookup on the query's cell returns every segment that can
/// hold an admissible foot point.
#[derive(Debug, Clone)]
pub(crate) struct SegmentGrid {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

impl SegmentGrid {
    pub fn build(points: &[Vec2], closed: bool, capture: f64) -> Self {
        let n = points.len();
        let nseg = if closed { n } else { n - 1 };
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let margin = capture.max(1e-6);
        let origin = [lo[0] - margin, lo[1] - margin];
        let span = [hi[0] - lo[0] + 2.0 * margin, hi[1] - lo[1] + 2.0 * margin];
        // about one segment per cell on average, never finer than the margin
        let target = ((nseg as f64).sqrt().ceil() as usize).clamp(1, 512);
        let cell = (span[0].max(span[1]) / target as f64).max(margin);
        let nx = ((span[0] / cell).ceil() as usize).max(1);
        let ny = ((span[1] / cell).ceil() as usize).max(1);
        let mut cells = vec![Vec::new(); nx * ny];
        for i in 0..nseg {
            let a = points[i];
            let b = points[(i + 1) % n];
            let (x0, x1) = (a[0].min(b[0]) - margin, a[0].max(b[0]) + margin);
            let (y0, y1) = (a[1].min(b[1]) - margin, a[1].max(b[1]) + margin);
            let cx0 = (((x0 - origin[0]) / cell).floor().max(0.0) as usize).min(nx - 1);
            let cx1 = (((x1 - origin[0]) / cell).floor().max(0.0) as usize).min(nx - 1);
            let cy0 = (((y0 - origin[1]) / cell).floor().max(0.0) as usize).min(ny - 1);
            let cy1 = (((y1 - origin[1]) / cell).floor().max(0.0) as usize).min(ny - 1);
            for cy in cy0..=cy1 {
                for cx in cx0..=cx1 {
                    cells[cy * nx + cx].push(i);
                }
            }
        }
        Self {
            origin,
            cell,
            nx,
            ny,
            cells,
        }
    }

    /// Segment indices, ascending, whose grown box may contain `q`.
    pub fn candidates(&self, q: Vec2) -> impl Iterator<Item = usize> + '_ {
        let fx = (q[0] - self.origin[0]) / self.cell;
        let fy = (q[1] - self.origin[1]) / self.cell;
        let inside = fx >= 0.0 && fy >= 0.0 && (fx as usize) < self.nx && (fy as usize) < self.ny;
        let slot: &[usize] = if inside {
            &self.cells[fy as usize * self.nx + fx as usize]
        } else {
            &[]
        };
        slot.iter().copied()
    }
}
