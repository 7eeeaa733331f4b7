//! Depth evaluation metrics: AbsRel, RMSE, and δ-accuracies, with
//! range-truncated evaluation and dataset-level aggregation.

use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::geometry::{distortion_map, DistortionMap, ErpGrid};
use crate::{Error, Result};

/// Evaluation protocol settings.
///
/// The protocol is metric (no scale or shift alignment). Pixels enter the
/// evaluation when the ground truth is valid and lies in
/// `[min_depth, max_depth]`; predicted values are read as stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Ground-truth depths below this are excluded, meters.
    pub min_depth: f64,
    /// Optional truncation threshold, meters: ground truth above it is
    /// excluded, mirroring evaluation against a range-masked ground truth.
    pub max_depth: Option<f64>,
    /// Weight per-pixel means by the ERP latitude distortion map.
    pub latitude_weighted: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            min_depth: 0.01,
            max_depth: None,
            latitude_weighted: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_depth.is_finite() && self.min_depth > 0.0) {
            return Err(Error::Config {
                field: "min_depth".into(),
                msg: format!("must be positive and finite, got {}", self.min_depth),
            });
        }
        if let Some(max) = self.max_depth {
            if !(max.is_finite() && max > self.min_depth) {
                return Err(Error::Config {
                    field: "max_depth".into(),
                    msg: format!("must be finite and exceed min_depth, got {max}"),
                });
            }
        }
        Ok(())
    }
}

/// Evaluation result, either for one image or aggregated.
///
/// Carries the weighted sufficient statistics so reports can be pooled
/// exactly; those fields stay out of the serialized form, whose field names
/// are fixed for downstream tooling.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub abs_rel: f64,
    /// Root mean squared error, meters.
    pub rmse: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// Pixels that passed the validity-and-range filter.
    pub n_valid: u64,
    /// True when this report aggregates several images.
    pub aggregated: bool,
    #[serde(skip)]
    sums: MetricSums,
}

/// Weighted sums underlying the metric means.
#[derive(Debug, Clone, Copy, Default)]
struct MetricSums {
    weight: f64,
    abs_rel: f64,
    sq_err: f64,
    delta1: f64,
    delta2: f64,
    delta3: f64,
}

impl MetricSums {
    fn into_report(self, n_valid: u64, aggregated: bool) -> MetricsReport {
        MetricsReport {
            abs_rel: self.abs_rel / self.weight,
            rmse: (self.sq_err / self.weight).sqrt(),
            delta1: self.delta1 / self.weight,
            delta2: self.delta2 / self.weight,
            delta3: self.delta3 / self.weight,
            n_valid,
            aggregated,
            sums: self,
        }
    }
}

/// How [`aggregate`] combines per-image reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregateMode {
    /// Arithmetic mean of each metric over images (the default protocol).
    MeanOfImages,
    /// Recompute from pooled sufficient statistics, as if evaluating the
    /// concatenation of all images.
    PixelPooled,
}

/// Evaluates a prediction against ground truth.
///
/// Over pixels where the ground truth is valid and inside
/// `[min_depth, max_depth]`: `AbsRel = mean(|p−g|/g)`,
/// `RMSE = √mean((p−g)²)`, and `δ_k` is the fraction with
/// `max(p/g, g/p) < 1.25^k`. Means are latitude-weighted when configured.
/// Fails, naming the filter, when no pixel qualifies.
pub fn evaluate(pred: &DepthMap, gt: &DepthMap, cfg: &EvalConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    pred.same_shape(gt, "evaluate pred vs gt")?;
    let weights: Option<DistortionMap> = if cfg.latitude_weighted {
        Some(distortion_map(&ErpGrid::of(gt)?))
    } else {
        None
    };

    let mut sums = MetricSums::default();
    let mut n_valid = 0u64;
    let mut n_gt_valid = 0u64;
    for r in 0..gt.height() {
        for c in 0..gt.width() {
            if !gt.is_valid(r, c) {
                continue;
            }
            n_gt_valid += 1;
            let g = gt.value(r, c) as f64;
            if g < cfg.min_depth || cfg.max_depth.is_some_and(|m| g > m) {
                continue;
            }
            let p = pred.value(r, c) as f64;
            let w = weights.as_ref().map_or(1.0, |m| m.weight(r, c));
            let ratio = (p / g).max(g / p);
            sums.weight += w;
            sums.abs_rel += w * (p - g).abs() / g;
            sums.sq_err += w * (p - g) * (p - g);
            sums.delta1 += w * f64::from(ratio < 1.25);
            sums.delta2 += w * f64::from(ratio < 1.25 * 1.25);
            sums.delta3 += w * f64::from(ratio < 1.25 * 1.25 * 1.25);
            n_valid += 1;
        }
    }
    if n_valid == 0 {
        let filter = if n_gt_valid == 0 {
            "ground-truth validity mask"
        } else {
            "depth range filter [min_depth, max_depth]"
        };
        return Err(Error::EmptyOverlap(format!("no pixel passed the {filter}")));
    }
    Ok(sums.into_report(n_valid, false))
}

/// Combines per-image reports into one dataset-level report.
pub fn aggregate(reports: &[MetricsReport], mode: AggregateMode) -> Result<MetricsReport> {
    if reports.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty report list"));
    }
    let n_valid = reports.iter().map(|r| r.n_valid).sum();
    match mode {
        AggregateMode::MeanOfImages => {
            let n = reports.len() as f64;
            let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
            Ok(MetricsReport {
                abs_rel: mean(|r| r.abs_rel),
                rmse: mean(|r| r.rmse),
                delta1: mean(|r| r.delta1),
                delta2: mean(|r| r.delta2),
                delta3: mean(|r| r.delta3),
                n_valid,
                aggregated: true,
                sums: MetricSums::default(),
            })
        }
        AggregateMode::PixelPooled => {
            let mut pooled = MetricSums::default();
            for r in reports {
                pooled.weight += r.sums.weight;
                pooled.abs_rel += r.sums.abs_rel;
                pooled.sq_err += r.sums.sq_err;
                pooled.delta1 += r.sums.delta1;
                pooled.delta2 += r.sums.delta2;
                pooled.delta3 += r.sums.delta3;
            }
            if pooled.weight == 0.0 {
                return Err(Error::invalid(
                    "pixel-pooled aggregation needs reports produced by evaluate",
                ));
            }
            Ok(pooled.into_report(n_valid, true))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::{apply_range_mask, gt_range_mask, RangeThreshold};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn perfect_prediction_scores_perfectly() {
        let gt = DepthMap::from_values(array![[1.0, 5.0], [20.0, 80.0]]).unwrap();
        let r = evaluate(&gt, &gt, &EvalConfig::default()).unwrap();
        assert_eq!(r.abs_rel, 0.0);
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.delta1, 1.0);
        assert_eq!(r.n_valid, 4);
    }

    #[test]
    fn abs_rel_hand_value() {
        let pred = DepthMap::from_values(array![[2.0, 2.0]]).unwrap();
        let gt = DepthMap::from_values(array![[1.0, 4.0]]).unwrap();
        let r = evaluate(&pred, &gt, &EvalConfig::default()).unwrap();
        assert_abs_diff_eq!(r.abs_rel, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn delta_boundary_at_ratio_1_3() {
        let pred = DepthMap::from_values(array![[1.3]]).unwrap();
        let gt = DepthMap::from_values(array![[1.0]]).unwrap();
        let r = evaluate(&pred, &gt, &EvalConfig::default()).unwrap();
        assert_eq!(r.delta1, 0.0);
        assert_eq!(r.delta2, 1.0);
        assert_eq!(r.delta3, 1.0);
    }

    #[test]
    fn delta_is_symmetric_abs_rel_is_not() {
        let a = DepthMap::from_values(array![[2.0, 3.0, 10.0]]).unwrap();
        let b = DepthMap::from_values(array![[1.5, 4.0, 9.0]]).unwrap();
        let ab = evaluate(&a, &b, &EvalConfig::default()).unwrap();
        let ba = evaluate(&b, &a, &EvalConfig::default()).unwrap();
        assert_abs_diff_eq!(ab.delta1, ba.delta1, epsilon = 1e-12);
        assert_abs_diff_eq!(ab.delta2, ba.delta2, epsilon = 1e-12);
        assert!((ab.abs_rel - ba.abs_rel).abs() > 1e-3);
    }

    #[test]
    fn truncation_equals_premasked_ground_truth() {
        let gt = DepthMap::from_values(array![[5.0, 15.0, 60.0], [120.0, 2.0, 40.0]]).unwrap();
        let pred = DepthMap::from_values(array![[5.5, 14.0, 70.0], [100.0, 2.2, 38.0]]).unwrap();
        for t in RangeThreshold::PRESETS {
            let truncated = evaluate(
                &pred,
                &gt,
                &EvalConfig {
                    max_depth: Some(t as f64),
                    ..EvalConfig::default()
                },
            )
            .unwrap();
            let masked =
                apply_range_mask(&gt, &gt_range_mask(&gt, RangeThreshold::new(t).unwrap()))
                    .unwrap();
            let premasked = evaluate(&pred, &masked, &EvalConfig::default()).unwrap();
            assert_abs_diff_eq!(truncated.abs_rel, premasked.abs_rel, epsilon = 1e-12);
            assert_abs_diff_eq!(truncated.rmse, premasked.rmse, epsilon = 1e-12);
            assert_eq!(truncated.n_valid, premasked.n_valid);
        }
    }

    #[test]
    fn empty_filter_errors_name_the_culprit() {
        let gt = DepthMap::from_values(array![[500.0]]).unwrap();
        let pred = DepthMap::from_values(array![[499.0]]).unwrap();
        let err = evaluate(
            &pred,
            &gt,
            &EvalConfig {
                max_depth: Some(100.0),
                ..EvalConfig::default()
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("range filter"));
    }

    #[test]
    fn aggregate_mean_of_images() {
        let one = |ar: f32| {
            let gt = DepthMap::from_values(array![[1.0]]).unwrap();
            let pred = DepthMap::from_values(array![[1.0 + ar]]).unwrap();
            evaluate(&pred, &gt, &EvalConfig::default()).unwrap()
        };
        let a = one(0.1);
        let b = one(0.3);
        let agg = aggregate(std::slice::from_ref(&a), AggregateMode::MeanOfImages).unwrap();
        assert_abs_diff_eq!(agg.abs_rel, a.abs_rel, epsilon = 1e-12);
        let agg = aggregate(&[a, b], AggregateMode::MeanOfImages).unwrap();
        assert_abs_diff_eq!(agg.abs_rel, 0.2, epsilon = 1e-6);
        assert!(agg.aggregated);
    }

    #[test]
    fn pixel_pooled_matches_concatenation() {
        let gt_a = DepthMap::from_values(array![[1.0, 2.0]]).unwrap();
        let pr_a = DepthMap::from_values(array![[1.2, 1.7]]).unwrap();
        let gt_b = DepthMap::from_values(array![[4.0, 8.0]]).unwrap();
        let pr_b = DepthMap::from_values(array![[3.0, 9.5]]).unwrap();
        let cfg = EvalConfig::default();
        let pooled = aggregate(
            &[
                evaluate(&pr_a, &gt_a, &cfg).unwrap(),
                evaluate(&pr_b, &gt_b, &cfg).unwrap(),
            ],
            AggregateMode::PixelPooled,
        )
        .unwrap();
        let gt_cat = DepthMap::from_values(array![[1.0, 2.0, 4.0, 8.0]]).unwrap();
        let pr_cat = DepthMap::from_values(array![[1.2, 1.7, 3.0, 9.5]]).unwrap();
        let cat = evaluate(&pr_cat, &gt_cat, &cfg).unwrap();
        assert_abs_diff_eq!(pooled.abs_rel, cat.abs_rel, epsilon = 1e-12);
        assert_abs_diff_eq!(pooled.rmse, cat.rmse, epsilon = 1e-12);
        assert_abs_diff_eq!(pooled.delta1, cat.delta1, epsilon = 1e-12);
    }

    #[test]
    fn aggregate_refuses_empty_input() {
        assert!(aggregate(&[], AggregateMode::MeanOfImages).is_err());
    }

    #[test]
    fn delta_ordering_holds() {
        let mut rng_state = 7u64;
        let mut next = move || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((rng_state >> 33) as f32 / u32::MAX as f32 * 49.5 + 0.5).max(0.5)
        };
        let gt = DepthMap::from_fn(16, 8, |_, _| Some(next())).unwrap();
        let pred = DepthMap::from_fn(16, 8, |_, _| Some(next())).unwrap();
        let r = evaluate(&pred, &gt, &EvalConfig::default()).unwrap();
        assert!(r.delta1 <= r.delta2 && r.delta2 <= r.delta3);
        assert!((0.0..=1.0).contains(&r.delta1) && (0.0..=1.0).contains(&r.delta3));
    }
}
