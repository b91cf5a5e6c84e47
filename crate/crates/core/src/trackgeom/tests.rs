use std::f64::consts::PI;

use proptest::prelude::*;

use super::*;

fn circle(radius: f64, n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

fn circle_track(radius: f64, n: usize, wl: f64, wr: f64) -> TrackModel {
    TrackModel::new(circle(radius, n), vec![wl; n], vec![wr; n]).unwrap()
}

fn oval() -> TrackModel {
    let pts = stadium_points(500.0, 250.0, 2.0);
    let n = pts.len();
    TrackModel::new(pts, vec![8.0; n], vec![8.0; n]).unwrap()
}

/// Brute-force foot search: scan each segment finely through the public
/// frame, bisect every sign change of cross(N, q - P), keep the closest
/// candidate and break ties by the smaller arc length.
fn oracle_project(line: &ReferenceLine, q: [f64; 2]) -> Option<(f64, f64)> {
    let f = |s: f64| {
        let (p, n) = line.frame(s);
        let w = [q[0] - p[0], q[1] - p[1]];
        (n[0] * w[1] - n[1] * w[0], n[0] * w[0] + n[1] * w[1])
    };
    let cum = line.cum_s();
    let mut best: Option<(f64, f64)> = None;
    for i in 0..line.segment_count() {
        let (a, b) = (cum[i], cum.get(i + 1).copied().unwrap_or(line.total_length()));
        const K: usize = 64;
        let mut prev = (a, f(a).0);
        if prev.1 == 0.0 {
            let d = f(a).1;
            if d.abs() <= line.capture_distance() && best.is_none_or(|(_, bd)| d.abs() < bd.abs() - 1e-9) {
                best = Some((a, d));
            }
        }
        for k in 1..=K {
            let s = a + (b - a) * k as f64 / K as f64;
            // stay inside the segment so the frame is not taken from the next one
            let s = if k == K { b - 1e-12 * (b - a) } else { s };
            let cur = (s, f(s).0);
            let root = if cur.1 == 0.0 {
                Some(cur.0)
            } else if prev.1 != 0.0 && prev.1.signum() != cur.1.signum() {
                let (mut lo, mut hi) = (prev.0, cur.0);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid).0.signum() == f(lo).0.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Some(0.5 * (lo + hi))
            } else {
                None
            };
            if let Some(s_root) = root {
                let d = f(s_root).1;
                if d.abs() <= line.capture_distance() {
                    best = match best {
                        Some((bs, bd)) if bd.abs() < d.abs() - 1e-9 => Some((bs, bd)),
                        Some((bs, bd)) if (bd.abs() - d.abs()).abs() <= 1e-9 && bs <= s_root => {
                            Some((bs, bd))
                        }
                        _ => Some((s_root, d)),
                    };
                }
            }
            prev = cur;
        }
    }
    best
}

#[test]
fn straight_line_examples() {
    let line = ReferenceLine::new(vec![[0.0, 0.0], [20.0, 0.0]], false, 10.0).unwrap();
    let at = |s, d| line.frenet_to_cartesian(&FrenetPose { s, d, mu: 0.0 });
    assert_eq!(at(10.0, 0.0), (10.0, 0.0, 0.0));
    assert_eq!(at(10.0, 2.0), (10.0, 2.0, 0.0));
    let p = line.cartesian_to_frenet(10.0, -3.0, 0.25).unwrap();
    assert_eq!((p.s, p.d, p.mu), (10.0, -3.0, 0.25));
}

#[test]
fn circle_half_length_is_diametrically_opposite() {
    let track = circle_track(100.0, 720, 5.0, 5.0);
    let s = track.total_length() / 2.0;
    let (x, y, yaw) = track.frenet_to_cartesian(&FrenetPose { s, d: 0.0, mu: 0.0 });
    let (x0, y0, yaw0) = track.frenet_to_cartesian(&FrenetPose::default());
    assert!((x - -100.0).abs() < 1e-9 && y.abs() < 1e-9);
    assert!((x0 - 100.0).abs() < 1e-9 && y0.abs() < 1e-9);
    assert!((wrap_angle(yaw - yaw0) - PI).abs() < 1e-9);
}

#[test]
fn far_points_are_rejected() {
    let track = circle_track(100.0, 360, 5.0, 5.0);
    assert!(matches!(
        track.cartesian_to_frenet(0.0, 0.0, 0.0),
        Err(GeomError::OutOfCapture { .. })
    ));
    assert!(track.cartesian_to_frenet(500.0, 0.0, 0.0).is_err());
}

#[test]
fn hairpin_tie_takes_smallest_s() {
    // narrow stadium: the two straights are 10 m apart
    let pts = stadium_points(100.0, 5.0, 0.5);
    let n = pts.len();
    let track = TrackModel::with_capture(pts, vec![4.0; n], vec![4.0; n], 20.0).unwrap();
    let q = [50.0, 0.0];
    let got = track.cartesian_to_frenet(q[0], q[1], 0.0).unwrap();
    let (s_ref, d_ref) = oracle_project(track.line(), q).unwrap();
    assert!((got.s - s_ref).abs() < 1e-6, "{} vs {}", got.s, s_ref);
    assert!((got.d - d_ref).abs() < 1e-6);
    // the bottom straight runs first, so the tie resolves to it
    assert!((got.s - 50.0).abs() < 1e-9);
    assert!((got.d - 5.0).abs() < 1e-9);
}

#[test]
fn projection_matches_sampling_oracle_on_random_points() {
    use rand::{Rng, SeedableRng};
    let pts = stadium_points(80.0, 30.0, 3.0);
    let n = pts.len();
    let track = TrackModel::new(pts, vec![6.0; n], vec![6.0; n]).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let s = rng.random_range(0.0..track.total_length());
        let d = rng.random_range(-12.0..12.0);
        let (x, y, _) = track.frenet_to_cartesian(&FrenetPose { s, d, mu: 0.0 });
        let got = track.cartesian_to_frenet(x, y, 0.0).unwrap();
        let (s_ref, d_ref) = oracle_project(track.line(), [x, y]).unwrap();
        assert!((got.s - s_ref).abs() < 1e-6, "s {} vs {}", got.s, s_ref);
        assert!((got.d - d_ref).abs() < 1e-6);
    }
}

#[test]
fn reproject_identity_and_constant_offset() {
    let track = oval();
    let same = RacingLine::new(
        track.line().points().to_vec(),
        vec![50.0; track.line().points().len()],
        32.0,
    )
    .unwrap();
    let p = FrenetPose { s: 321.5, d: 1.25, mu: 0.05 };
    let q = reproject_init(&track, &same, &p).unwrap();
    assert!((q.s - p.s).abs() < 1e-9 && (q.d - p.d).abs() < 1e-9 && (q.mu - p.mu).abs() < 1e-12);

    // racing line 3 m to the left of the bottom straight of a stadium
    let pts = stadium_points(400.0, 100.0, 1.0);
    let n = pts.len();
    let center = TrackModel::new(pts, vec![10.0; n], vec![10.0; n]).unwrap();
    let shifted = RacingLine::new(
        (0..=100).map(|k| [100.0 + k as f64, -97.0]).chain([[300.0, 0.0]]).collect(),
        vec![30.0; 102],
        40.0,
    )
    .unwrap();
    let q = reproject_init(&center, &shifted, &FrenetPose { s: 20.0, d: 0.0, mu: 0.0 }).unwrap();
    assert!((q.d - 3.0).abs() < 1e-9, "{q:?}");
    assert!((q.s - 120.0).abs() < 1e-9);
    assert!(q.mu.abs() < 1e-12);
}

#[test]
fn yaw_correction_equals_heading_difference_on_offset_circle() {
    // centerline: circle about the origin; racing line: same radius,
    // centered 3 m along +x. Analytic heading difference at racing-line
    // angle phi is phi - atan2(R sin phi, 3 + R cos phi).
    let r = 100.0;
    let n = 2000;
    let center = circle_track(r, n, 8.0, 8.0);
    let traj_pts: Vec<[f64; 2]> = circle(r, n).into_iter().map(|p| [p[0] + 3.0, p[1]]).collect();
    let traj = RacingLine::new(traj_pts, vec![40.0; n], 32.0).unwrap();
    for phi in [0.3, 1.2, 2.0, 4.0] {
        let s = phi / (2.0 * PI) * traj.line().total_length();
        let got = reproject_init(&center, &traj, &FrenetPose { s, d: 0.0, mu: 0.0 }).unwrap();
        let (px, py) = (3.0 + r * f64::cos(phi), r * f64::sin(phi));
        let psi = py.atan2(px);
        let theta = wrap_angle(phi - psi);
        assert!((got.mu - theta).abs() < 1e-5, "phi {phi}: {} vs {}", got.mu, theta);
        assert!((got.d - (r - px.hypot(py))).abs() < 1e-3);
        assert!(theta.abs() > 1e-3);
    }
}

#[test]
fn boundary_distance_examples() {
    let track = oval();
    let (x, y, _) = track.frenet_to_cartesian(&FrenetPose { s: 100.0, d: 0.0, mu: 0.0 });
    assert!((track.distance_to_boundary(x, y).unwrap() - 8.0).abs() < 1e-9);
    let (x, y, _) = track.frenet_to_cartesian(&FrenetPose { s: 100.0, d: 9.0, mu: 0.0 });
    assert!((track.distance_to_boundary(x, y).unwrap() - -1.0).abs() < 1e-9);
}

#[test]
fn boundary_distance_matches_sampled_edges() {
    use rand::{Rng, SeedableRng};
    let track = circle_track(100.0, 600, 5.0, 7.0);
    // dense samples of both edges through the public frame
    let m = 40_000;
    let edges: Vec<([f64; 2], [f64; 2])> = (0..m)
        .map(|k| {
            let s = track.total_length() * k as f64 / m as f64;
            let (p, nrm) = track.line().frame(s);
            let (wl, wr) = track.width_at(s);
            (
                [p[0] + wl * nrm[0], p[1] + wl * nrm[1]],
                [p[0] - wr * nrm[0], p[1] - wr * nrm[1]],
            )
        })
        .collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let a = rng.random_range(0.0..2.0 * PI);
        let rad = rng.random_range(91.0..107.0);
        let (x, y) = (rad * a.cos(), rad * a.sin());
        let near = edges
            .iter()
            .flat_map(|(l, r)| [l, r])
            .map(|e| (e[0] - x).hypot(e[1] - y))
            .fold(f64::INFINITY, f64::min);
        // left is inward on a counter-clockwise circle: d = 100 - rad
        let inside = (95.0..=107.0).contains(&rad);
        let oracle = if inside { near } else { -near };
        let got = track.distance_to_boundary(x, y).unwrap();
        assert!((got - oracle).abs() < 2e-3, "r {rad}: {got} vs {oracle}");
    }
}

#[test]
fn seam_is_continuous() {
    let track = oval();
    let l = track.total_length();
    let mut last: Option<FrenetPose> = None;
    for k in -20..=20 {
        let s = k as f64 * 0.05;
        let (x, y, yaw) = track.frenet_to_cartesian(&FrenetPose { s, d: 2.0, mu: 0.1 });
        let p = track.cartesian_to_frenet(x, y, yaw).unwrap();
        assert!((0.0..l).contains(&p.s));
        if let Some(q) = last {
            assert!(track.line().s_diff(p.s, q.s).abs() < 0.06);
            assert!((p.d - q.d).abs() < 1e-6);
            assert!((p.mu - q.mu).abs() < 1e-6);
        }
        last = Some(p);
    }
}

#[test]
fn csv_round_trip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let track = circle_track(50.0, 64, 4.0, 5.0);
    track.write_csv(&path).unwrap();
    let back = TrackModel::from_csv(&path).unwrap();
    assert_eq!(back.line().points(), track.line().points());
    assert_eq!(back.widths().1[3], 5.0);

    std::fs::write(&path, "x,y,w_left,w_right\n0,0,1,1\n1,0,1,1\n").unwrap();
    assert!(matches!(TrackModel::from_csv(&path), Err(GeomError::TooFewPoints(2))));
    std::fs::write(&path, "x,y,w_left,w_right\n0,0,1,1\n1,0,0,1\n0,1,1,1\n").unwrap();
    assert!(matches!(TrackModel::from_csv(&path), Err(GeomError::BadWidth(1))));
}

#[test]
fn heading_and_curvature_on_circle() {
    let track = circle_track(100.0, 720, 5.0, 5.0);
    for s in [0.0, 100.0, 333.3] {
        assert!((track.line().curvature_at(s) - 0.01).abs() < 1e-6);
        let a = s / track.total_length() * 2.0 * PI;
        assert!(wrap_angle(track.line().heading_at(s) - (a + PI / 2.0)).abs() < 1e-4);
    }
}

proptest! {
    #[test]
    fn frenet_round_trip(s in 0.0..2570.0f64, d in -7.9..7.9f64, mu in -3.0..3.0f64) {
        let track = oval_cached();
        let p = FrenetPose { s: track.line().normalize_s(s), d, mu };
        let (x, y, yaw) = track.frenet_to_cartesian(&p);
        let q = track.cartesian_to_frenet(x, y, yaw).unwrap();
        prop_assert!(track.line().s_diff(q.s, p.s).abs() < 1e-6);
        prop_assert!((q.d - p.d).abs() < 1e-6);
        prop_assert!(wrap_angle(q.mu - p.mu).abs() < 1e-8);
    }

    #[test]
    fn cartesian_round_trip(s in 0.0..2570.0f64, d in -7.9..7.9f64, yaw in -3.0..3.0f64) {
        let track = oval_cached();
        let (x, y, _) = track.frenet_to_cartesian(&FrenetPose { s, d, mu: 0.0 });
        let p = track.cartesian_to_frenet(x, y, yaw).unwrap();
        let (x2, y2, yaw2) = track.frenet_to_cartesian(&p);
        prop_assert!((x2 - x).abs() < 1e-6 && (y2 - y).abs() < 1e-6);
        prop_assert!(wrap_angle(yaw2 - yaw).abs() < 1e-8);
    }

    #[test]
    fn reproject_on_itself_is_identity(s in 0.0..2570.0f64, d in -7.9..7.9f64, mu in -1.0..1.0f64) {
        let track = oval_cached();
        let line = RacingLine::new(track.line().points().to_vec(), vec![1.0; track.line().points().len()], 32.0).unwrap();
        let p = FrenetPose { s: track.line().normalize_s(s), d, mu };
        let q = reproject_init(track, &line, &p).unwrap();
        prop_assert!(track.line().s_diff(q.s, p.s).abs() < 1e-6);
        prop_assert!((q.d - p.d).abs() < 1e-6);
        prop_assert!(wrap_angle(q.mu - p.mu).abs() < 1e-8);
    }
}

fn oval_cached() -> &'static TrackModel {
    static T: std::sync::OnceLock<TrackModel> = std::sync::OnceLock::new();
    T.get_or_init(oval)
}
