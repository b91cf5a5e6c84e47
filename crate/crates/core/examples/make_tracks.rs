//! Writes the oval used by the bundled scenarios: centerline with 8 m of
//! track either side and a constant-speed racing line on the centerline.
//!
//! cargo run --example make_tracks -- crates/core/tracks

use std::path::PathBuf;

use racesim::trackgeom::{stadium_points, RacingLine, TrackModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "tracks".into()));
    std::fs::create_dir_all(&dir)?;
    let pts = stadium_points(500.0, 250.0, 2.0);
    let n = pts.len();
    let track = TrackModel::new(pts.clone(), vec![8.0; n], vec![8.0; n])?;
    track.write_csv(dir.join("oval.csv"))?;
    let line = RacingLine::new(pts, vec![75.0; n], 32.0)?;
    line.write_csv(dir.join("oval_line.csv"))?;
    println!("oval: {n} points, {:.1} m", track.total_length());
    Ok(())
}
