//! Depth evaluation: AbsRel / RMSE / δ-accuracies, range-truncated
//! protocols, and dataset aggregation.
//!
//! ```bash
//! cargo run -p panodepth --example evaluate_metrics
//! ```

use panodepth::depth::DepthMap;
use panodepth::metrics::{aggregate, evaluate, AggregateMode, EvalConfig};

fn main() -> panodepth::Result<()> {
    // Two synthetic "images" with different error characters.
    let gt_a = DepthMap::from_fn(64, 32, |r, c| Some(2.0 + 0.5 * (r + c) as f32))?;
    let pred_a = DepthMap::from_fn(64, 32, |r, c| Some(gt_a.value(r, c) * 1.08))?;
    let gt_b = DepthMap::from_fn(64, 32, |r, c| Some(1.0 + 2.0 * (r * 64 + c) as f32 % 120.0))?;
    let pred_b = DepthMap::from_fn(64, 32, |r, c| Some(gt_b.value(r, c) + 3.0))?;

    let cfg = EvalConfig::default();
    let ra = evaluate(&pred_a, &gt_a, &cfg)?;
    let rb = evaluate(&pred_b, &gt_b, &cfg)?;
    for (name, r) in [
        ("image A (8% scale error)", &ra),
        ("image B (+3 m bias)", &rb),
    ] {
        println!(
            "{name:<26} AbsRel {:.4}  RMSE {:>7.3}  δ1 {:.4}  δ2 {:.4}  δ3 {:.4}  ({} px)",
            r.abs_rel, r.rmse, r.delta1, r.delta2, r.delta3, r.n_valid
        );
    }

    for mode in [AggregateMode::MeanOfImages, AggregateMode::PixelPooled] {
        let agg = aggregate(&[ra.clone(), rb.clone()], mode)?;
        println!(
            "{mode:<26?} AbsRel {:.4}  RMSE {:>7.3}  δ1 {:.4}",
            agg.abs_rel, agg.rmse, agg.delta1
        );
    }

    // Range-truncated protocol: only ground truth within the threshold counts.
    for t in [10.0, 20.0, 50.0, 100.0] {
        let r = evaluate(
            &pred_b,
            &gt_b,
            &EvalConfig {
                max_depth: Some(t),
                ..EvalConfig::default()
            },
        )?;
        println!(
            "truncated at {t:>5.0} m: AbsRel {:.4} over {} px",
            r.abs_rel, r.n_valid
        );
    }
    Ok(())
}
