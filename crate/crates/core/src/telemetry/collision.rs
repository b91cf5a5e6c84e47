/// Oriented rectangle: centre, heading, full length and width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
}

impl Footprint {
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(a, b)| [self.x + a * c - b * s, self.y + a * s + b * c])
    }

    fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.yaw.sin_cos();
        [[c, s], [-s, c]]
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (px - self.x, py - self.y);
        (dx * c + dy * s).abs() <= self.length / 2.0 && (-dx * s + dy * c).abs() <= self.width / 2.0
    }
}

/// Signed separating-axis margin: the largest gap over the four box axes
/// when the boxes are apart (positive), otherwise minus the smallest
/// overlap depth.
pub fn separation(a: &Footprint, b: &Footprint) -> f64 {
    let (ca, cb) = (a.corners(), b.corners());
    let mut best_gap = f64::NEG_INFINITY;
    let mut min_depth = f64::INFINITY;
    for axis in a.axes().into_iter().chain(b.axes()) {
        let project = |cs: &[[f64; 2]; 4]| {
            cs.iter()
                .map(|p| p[0] * axis[0] + p[1] * axis[1])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (alo, ahi) = project(&ca);
        let (blo, bhi) = project(&cb);
        best_gap = best_gap.max((blo - ahi).max(alo - bhi));
        min_depth = min_depth.min((ahi - blo).min(bhi - alo));
    }
    if best_gap > 0.0 {
        best_gap
    } else {
        -min_depth
    }
}

/// Separating-axis test. Touching rectangles count as overlapping.
pub fn overlaps(a: &Footprint, b: &Footprint) -> bool {
    separation(a, b) <= 0.0
}
