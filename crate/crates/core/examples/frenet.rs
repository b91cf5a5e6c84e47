//! Frenet conversions on the oval: a few poses are mapped to the plane and
//! back, with the distance to the nearer track edge.
//!
//! cargo run --example frenet

use racesim::trackgeom::{stadium_points, FrenetPose, TrackModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pts = stadium_points(500.0, 250.0, 2.0);
    let n = pts.len();
    let track = TrackModel::new(pts, vec![8.0; n], vec![8.0; n])?;
    println!("track length {:.2} m", track.total_length());
    for (s, d, mu) in [(0.0, 0.0, 0.0), (250.0, 3.0, 0.1), (700.0, -6.5, -0.2), (2500.0, 7.9, 0.0)] {
        let (x, y, yaw) = track.frenet_to_cartesian(&FrenetPose { s, d, mu });
        let back = track.cartesian_to_frenet(x, y, yaw)?;
        let edge = track.distance_to_boundary(x, y)?;
        println!(
            "s={s:7.1} d={d:5.1} mu={mu:5.2} -> x={x:8.2} y={y:8.2} yaw={yaw:6.3} -> s={:7.1} d={:5.2} mu={:5.2}  edge {edge:.2} m",
            back.s, back.d, back.mu
        );
    }
    Ok(())
}
