//! ERP geometry: pixel↔ray mapping, latitude distortion weights, and
//! back-projection to 3D points.
//!
//! ```bash
//! cargo run -p panodepth --example erp_geometry
//! ```

use panodepth::depth::DepthMap;
use panodepth::geometry::{backproject, distortion_map, Direction, ErpGrid};

fn main() -> panodepth::Result<()> {
    let grid = ErpGrid::new(512, 256)?;

    // Pixel centers map to unit view rays (y-up, z-forward).
    for (u, v, label) in [
        (255.5, 127.5, "image center"),
        (0.0, 0.0, "top-left pixel"),
        (384.0, 127.5, "quarter turn east"),
    ] {
        let d = grid.pixel_to_dir(u, v)?;
        println!(
            "({u:>6.1}, {v:>6.1}) {label:<18} -> ray ({:+.4}, {:+.4}, {:+.4})",
            d.x(),
            d.y(),
            d.z()
        );
    }

    // The inverse mapping wraps longitude and round-trips pixel centers.
    let d = Direction::new(0.3, -0.2, 0.5)?;
    let (u, v) = grid.dir_to_pixel(&d);
    let back = grid.pixel_to_dir(u, v)?;
    println!(
        "ray -> pixel ({u:.3}, {v:.3}) -> ray, error {:.2e}",
        (back.vector() - d.vector()).norm()
    );

    // Latitude weights: equator-heavy, mean exactly 1.
    let dm = distortion_map(&grid);
    let mean = dm.weights().iter().sum::<f64>() / (512.0 * 256.0);
    println!(
        "distortion weights: equator {:.4}, pole rows {:.4}, mean {:.6}",
        dm.weight(128, 0),
        dm.weight(0, 0),
        mean
    );

    // Back-projection lifts a constant-depth map onto a sphere of radius 5.
    let sphere = DepthMap::constant(128, 64, 5.0)?;
    let pc = backproject(&sphere)?;
    let radii: Vec<f64> = pc.points().iter().map(|p| p.norm()).collect();
    let (lo, hi) = radii
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    println!("constant depth 5 m back-projects to radii in [{lo:.6}, {hi:.6}]");
    Ok(())
}
