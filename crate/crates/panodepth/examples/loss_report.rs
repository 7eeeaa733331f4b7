//! The full training objective: six terms, distortion weighting, and the
//! gradient with respect to the predicted depth map.
//!
//! ```bash
//! cargo run -p panodepth --example loss_report
//! ```

use panodepth::depth::{gt_range_mask, DepthMap, RangeThreshold};
use panodepth::geometry::ErpGrid;
use panodepth::losses::{total_loss, LossConfig};

fn main() -> panodepth::Result<()> {
    let grid = ErpGrid::new(64, 32)?;
    // Ground truth: a room-like scene (floor + far wall with a step edge).
    let gt = DepthMap::from_fn(64, 32, |r, c| {
        let d = grid.pixel_center_dir(r, c);
        let wall = if c < 32 { 6.0 } else { 9.0 };
        Some(if d.y() < -0.2 {
            (1.6 / -d.y()) as f32
        } else {
            wall
        })
    })?;
    // Prediction: biased and slightly blurred.
    let pred = DepthMap::from_fn(64, 32, |r, c| {
        let left = gt.value(r, if c == 0 { 63 } else { c - 1 });
        Some(0.97 * (0.8 * gt.value(r, c) + 0.2 * left) + 0.1)
    })?;

    let cfg = LossConfig {
        df_patch_size: 32,
        ..LossConfig::default()
    };
    let rig = cfg.build_rig()?;
    let mask = gt_range_mask(&gt, RangeThreshold::new(10.0)?);
    let report = total_loss(&pred, &gt, Some(&mask), Some(&mask), &cfg, &rig)?;

    println!("weights: {:?}", cfg.weights);
    println!(
        "silog  = {:>10.6}  ({} px)",
        report.silog, report.pixels.silog
    );
    println!(
        "df     = {:>10.6}  ({} patch px)",
        report.df, report.pixels.df
    );
    println!(
        "grad   = {:>10.6}  ({} edge px)",
        report.grad, report.pixels.grad
    );
    println!(
        "normal = {:>10.6}  ({} px)",
        report.normal, report.pixels.normal
    );
    println!("pts    = {:>10.6}  ({} px)", report.pts, report.pixels.pts);
    println!(
        "mask   = {:>10.6}  ({} px)",
        report.mask, report.pixels.mask
    );
    println!("total  = {:>10.6}", report.total);

    let grad = report.gradient.as_ref().expect("gradient is filled");
    let largest = grad
        .indexed_iter()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    println!(
        "gradient: {}x{}, largest entry {:+.3e} at {:?}",
        grad.ncols(),
        grad.nrows(),
        largest.1,
        largest.0
    );
    Ok(())
}
