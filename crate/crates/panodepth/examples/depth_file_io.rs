//! Depth file formats: lossless PFM and RAWF32, quantized PNG16, and PLY
//! point-cloud export.
//!
//! ```bash
//! cargo run -p panodepth --example depth_file_io
//! ```

use panodepth::depth::DepthMap;
use panodepth::geometry::backproject;
use panodepth::io::{read_depth, write_depth, write_pointcloud, DepthFileFormat};

fn main() -> panodepth::Result<()> {
    let dir = std::env::temp_dir().join("panodepth_io_demo");
    std::fs::create_dir_all(&dir)?;

    // A map with an invalid hole; holes survive every format as 0-codes.
    let map = DepthMap::from_fn(32, 16, |r, c| {
        if (8..12).contains(&c) && r == 4 {
            None
        } else {
            Some(0.5 + 0.37 * ((r * 32 + c) as f32).sin().abs() + 3.0)
        }
    })?;

    for (name, format) in [
        ("depth.pfm", DepthFileFormat::Pfm),
        ("depth.raw", DepthFileFormat::RawF32),
        ("depth.png", DepthFileFormat::Png16 { scale: 256.0 }),
    ] {
        let path = dir.join(name);
        write_depth(&map, &path, format)?;
        let back = read_depth(&path, format)?;
        let lossless = back == map;
        let worst = map
            .values()
            .iter()
            .zip(back.values().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        println!(
            "{name:<10} bytes {:>5}  bit-identical: {lossless:<5}  max error {worst:.2e} m",
            std::fs::metadata(&path)?.len()
        );
    }
    println!(
        "(PNG16 at 256 counts/m quantizes to at most {:.2e} m)",
        1.0 / 512.0
    );

    let ply = dir.join("cloud.ply");
    write_pointcloud(&backproject(&map)?, &ply)?;
    println!("wrote {} ({} valid vertices)", ply.display(), map.n_valid());
    Ok(())
}
