//! Range masks: generate hard masks at the standard distance thresholds and
//! truncate a depth map with them.
//!
//! ```bash
//! cargo run -p panodepth --example range_masks
//! ```

use panodepth::depth::{apply_range_mask, gt_range_mask, DepthMap, RangeThreshold};

fn main() -> panodepth::Result<()> {
    // A synthetic scene whose depth grows from 1 m to ~160 m across columns.
    let depth = DepthMap::from_fn(64, 8, |_, c| Some(1.0 + 2.5 * c as f32))?;
    println!(
        "scene: {}x{}, depths 1.0..{:.1} m",
        depth.width(),
        depth.height(),
        depth.value(0, 63)
    );

    for t in RangeThreshold::PRESETS {
        let threshold = RangeThreshold::new(t)?;
        let mask = gt_range_mask(&depth, threshold);
        let truncated = apply_range_mask(&depth, &mask)?;
        let kept = truncated.n_valid();
        println!(
            "threshold {:>5.1} m -> {:>3} of {} pixels kept ({:.0}%)",
            t,
            kept,
            depth.width() * depth.height(),
            100.0 * kept as f64 / (depth.width() * depth.height()) as f64,
        );
    }

    // Masks are monotone in the threshold: tighter thresholds keep subsets.
    let m10 = gt_range_mask(&depth, RangeThreshold::new(10.0)?);
    let m100 = gt_range_mask(&depth, RangeThreshold::new(100.0)?);
    let monotone = m10
        .values()
        .iter()
        .zip(m100.values().iter())
        .all(|(a, b)| a <= b);
    println!("10 m mask is a subset of the 100 m mask: {monotone}");
    Ok(())
}
