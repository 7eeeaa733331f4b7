//! The six training losses with values and analytic gradients with respect
//! to the predicted depth map (or predicted soft mask for the mask term),
//! plus the distortion-weighted total.
//!
//! All per-pixel terms are means over the pixels they observe, so loss
//! magnitudes do not depend on image resolution and weight settings transfer
//! across sizes. When a [`DistortionMap`] is supplied, ERP-domain means
//! become latitude-weighted means; the DF term lives in perspective space
//! and is never distortion-weighted.

mod df;
mod edge;
mod geometric;
mod mask;
mod silog;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::depth::{BinaryMask, DepthMap};
use crate::geometry::{distortion_map, DistortionMap, ErpGrid};
use crate::reproject::IcosahedronRig;
use crate::{Error, Result};

pub use df::df_gram;
pub use edge::{sobel_edge_mask, EdgeMask};
pub use geometric::{normal_loss, pts_loss};
pub use mask::mask_loss;
pub use silog::{grad_loss, silog};

/// Relative weights of the six loss terms in the total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub silog: f64,
    pub df: f64,
    pub grad: f64,
    pub normal: f64,
    pub pts: f64,
    pub mask: f64,
}

impl Default for LossWeights {
    /// The standard training weights (1.0, 0.4, 5.0, 2.0, 2.0, 2.0).
    fn default() -> Self {
        LossWeights {
            silog: 1.0,
            df: 0.4,
            grad: 5.0,
            normal: 2.0,
            pts: 2.0,
            mask: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("weights.silog", self.silog),
            ("weights.df", self.df),
            ("weights.grad", self.grad),
            ("weights.normal", self.normal),
            ("weights.pts", self.pts),
            ("weights.mask", self.mask),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config {
                    field: name.into(),
                    msg: format!("must be finite and ≥ 0, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Which form the mask term takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskLossVariant {
    /// Mean squared error plus half the soft Dice loss (the default).
    MseDice,
    /// Binary cross-entropy plus half the soft Dice loss.
    BceDice,
}

/// Full loss configuration, deserializable from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub weights: LossWeights,
    /// Variance-focus constant of the SILog terms.
    pub silog_lambda: f64,
    /// Percentile of ground-truth Sobel magnitudes above which a pixel
    /// counts as an edge.
    pub edge_percentile: f64,
    /// Field of view of the 12 DF patches, degrees.
    pub df_fov_deg: f64,
    /// Side length of the DF patches, pixels.
    pub df_patch_size: usize,
    /// Whether ERP-domain means are latitude-weighted.
    pub use_distortion: bool,
    pub mask_variant: MaskLossVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            weights: LossWeights::default(),
            silog_lambda: 0.85,
            edge_percentile: 90.0,
            df_fov_deg: 90.0,
            df_patch_size: 128,
            use_distortion: true,
            mask_variant: MaskLossVariant::MseDice,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.silog_lambda.is_finite() && self.silog_lambda >= 0.0) {
            return Err(Error::Config {
                field: "silog_lambda".into(),
                msg: format!("must be finite and ≥ 0, got {}", self.silog_lambda),
            });
        }
        if !(self.edge_percentile > 0.0 && self.edge_percentile < 100.0) {
            return Err(Error::Config {
                field: "edge_percentile".into(),
                msg: format!("must lie in (0, 100), got {}", self.edge_percentile),
            });
        }
        if !(self.df_fov_deg > 0.0 && self.df_fov_deg < 180.0) {
            return Err(Error::Config {
                field: "df_fov_deg".into(),
                msg: format!("must lie in (0, 180), got {}", self.df_fov_deg),
            });
        }
        if self.df_patch_size < 2 {
            return Err(Error::Config {
                field: "df_patch_size".into(),
                msg: format!("must be ≥ 2, got {}", self.df_patch_size),
            });
        }
        Ok(())
    }

    /// Builds the DF rig described by this config.
    pub fn build_rig(&self) -> Result<IcosahedronRig> {
        IcosahedronRig::new(self.df_fov_deg, self.df_patch_size)
    }
}

/// Value, gradient, and contributing-pixel count of one loss term.
#[derive(Debug, Clone)]
pub struct TermResult {
    pub value: f64,
    /// ∂value/∂input, same shape as the predicted map (or mask).
    pub gradient: Array2<f64>,
    /// Pixels (for DF: patch pixels over included views) that contributed.
    pub pixels: usize,
}

/// Contributing-pixel counts per term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermPixels {
    pub silog: usize,
    pub df: usize,
    pub grad: usize,
    pub normal: usize,
    pub pts: usize,
    pub mask: usize,
}

/// Per-term values, weighted total, and the gradient of the total with
/// respect to the predicted depth map.
#[derive(Debug, Clone, Serialize)]
pub struct LossReport {
    pub silog: f64,
    pub df: f64,
    pub grad: f64,
    pub normal: f64,
    pub pts: f64,
    pub mask: f64,
    /// `Σ λᵢ·termᵢ` with the configured weights.
    pub total: f64,
    pub pixels: TermPixels,
    /// ∂total/∂pred-depth. The mask term does not touch depth, so its
    /// gradient (with respect to the soft mask) is not part of this array.
    #[serde(skip)]
    pub gradient: Option<Array2<f64>>,
}

pub(crate) fn weight_at(weights: Option<&DistortionMap>, r: usize, c: usize) -> f64 {
    weights.map_or(1.0, |m| m.weight(r, c))
}

pub(crate) fn check_weight_shape(
    weights: Option<&DistortionMap>,
    width: usize,
    height: usize,
) -> Result<()> {
    if let Some(m) = weights {
        if (m.width(), m.height()) != (width, height) {
            return Err(Error::dims(
                "distortion weights vs map",
                (width, height),
                (m.width(), m.height()),
            ));
        }
    }
    Ok(())
}

/// Evaluates all six terms and their weighted total.
///
/// ERP-domain terms (SILog, gradient, normal, point, mask) use
/// latitude-weighted means when `cfg.use_distortion` is set; the DF term is
/// always unweighted. The mask term is skipped (contributing 0) when either
/// mask is absent. The returned gradient is `Σ λᵢ ∇termᵢ` over the depth
/// terms.
pub fn total_loss(
    pred: &DepthMap,
    gt: &DepthMap,
    pred_mask: Option<&BinaryMask>,
    gt_mask: Option<&BinaryMask>,
    cfg: &LossConfig,
    rig: &IcosahedronRig,
) -> Result<LossReport> {
    cfg.validate()?;
    pred.same_shape(gt, "total_loss pred vs gt")?;
    let grid = ErpGrid::of(pred)?;
    let weights = cfg.use_distortion.then(|| distortion_map(&grid));
    let w = weights.as_ref();

    let silog_term = silog(pred, gt, w, cfg.silog_lambda)?;
    let df_term = df_gram(pred, gt, rig)?;
    let edge = sobel_edge_mask(gt, cfg.edge_percentile)?;
    let grad_term = grad_loss(pred, gt, &edge, w, cfg.silog_lambda)?;
    let normal_term = normal_loss(pred, gt, w)?;
    let pts_term = pts_loss(pred, gt, w)?;
    let mask_term = match (pred_mask, gt_mask) {
        (Some(p), Some(g)) => Some(mask_loss(p, g, w, cfg.mask_variant)?),
        _ => None,
    };

    let lam = &cfg.weights;
    let mask_value = mask_term.as_ref().map_or(0.0, |t| t.value);
    let total = lam.silog * silog_term.value
        + lam.df * df_term.value
        + lam.grad * grad_term.value
        + lam.normal * normal_term.value
        + lam.pts * pts_term.value
        + lam.mask * mask_value;

    let mut gradient = Array2::zeros((pred.height(), pred.width()));
    for (scale, term) in [
        (lam.silog, &silog_term),
        (lam.df, &df_term),
        (lam.grad, &grad_term),
        (lam.normal, &normal_term),
        (lam.pts, &pts_term),
    ] {
        gradient.zip_mut_with(&term.gradient, |acc, &g| *acc += scale * g);
    }

    Ok(LossReport {
        silog: silog_term.value,
        df: df_term.value,
        grad: grad_term.value,
        normal: normal_term.value,
        pts: pts_term.value,
        mask: mask_value,
        total,
        pixels: TermPixels {
            silog: silog_term.pixels,
            df: df_term.pixels,
            grad: grad_term.pixels,
            normal: normal_term.pixels,
            pts: pts_term.pixels,
            mask: mask_term.as_ref().map_or(0, |t| t.pixels),
        },
        gradient: Some(gradient),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::gt_range_mask;
    use crate::depth::RangeThreshold;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_map(seed: u64, w: usize, h: usize) -> DepthMap {
        let mut rng = StdRng::seed_from_u64(seed);
        DepthMap::from_fn(w, h, |_, _| Some(rng.gen_range(0.5f32..50.0))).unwrap()
    }

    #[test]
    fn default_weights_match_training_setup() {
        let w = LossWeights::default();
        assert_eq!(
            (w.silog, w.df, w.grad, w.normal, w.pts, w.mask),
            (1.0, 0.4, 5.0, 2.0, 2.0, 2.0)
        );
    }

    #[test]
    fn identical_inputs_give_zero_total() {
        let gt = random_map(3, 32, 16);
        let rig = IcosahedronRig::new(90.0, 16).unwrap();
        let cfg = LossConfig::default();
        let mask = gt_range_mask(&gt, RangeThreshold::new(100.0).unwrap());
        let report = total_loss(&gt, &gt, Some(&mask), Some(&mask), &cfg, &rig).unwrap();
        for v in [
            report.silog,
            report.df,
            report.grad,
            report.normal,
            report.pts,
            report.mask,
            report.total,
        ] {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn total_matches_hand_summed_terms_without_distortion() {
        let gt = random_map(5, 32, 16);
        let pred = random_map(6, 32, 16);
        let rig = IcosahedronRig::new(90.0, 16).unwrap();
        let cfg = LossConfig {
            use_distortion: false,
            df_patch_size: 16,
            ..LossConfig::default()
        };
        let report = total_loss(&pred, &gt, None, None, &cfg, &rig).unwrap();

        let silog_v = silog(&pred, &gt, None, cfg.silog_lambda).unwrap().value;
        let df_v = df_gram(&pred, &gt, &rig).unwrap().value;
        let edge = sobel_edge_mask(&gt, cfg.edge_percentile).unwrap();
        let grad_v = grad_loss(&pred, &gt, &edge, None, cfg.silog_lambda)
            .unwrap()
            .value;
        let normal_v = normal_loss(&pred, &gt, None).unwrap().value;
        let pts_v = pts_loss(&pred, &gt, None).unwrap().value;
        let hand = 1.0 * silog_v + 0.4 * df_v + 5.0 * grad_v + 2.0 * normal_v + 2.0 * pts_v;
        assert_abs_diff_eq!(report.total, hand, epsilon = 1e-7);
        assert_eq!(report.mask, 0.0);
    }

    #[test]
    fn total_gradient_matches_finite_differences() {
        // The per-term gradients are checked by the gradcheck harness; this
        // covers the λ-weighted composition path.
        let gt = random_map(7, 32, 16);
        let pred = random_map(8, 32, 16);
        let rig = IcosahedronRig::new(90.0, 8).unwrap();
        let cfg = LossConfig {
            df_patch_size: 8,
            ..LossConfig::default()
        };
        let report = total_loss(&pred, &gt, None, None, &cfg, &rig).unwrap();
        let grad = report.gradient.as_ref().unwrap();

        let eval = |values: ndarray::Array2<f32>| {
            let m = DepthMap::new(values, pred.valid().clone()).unwrap();
            total_loss(&m, &gt, None, None, &cfg, &rig).unwrap().total
        };
        let f0 = report.total;
        let mut checked = 0usize;
        for (r, c) in (0..16).flat_map(|r| [(r, 3 * r % 32), (r, (7 * r + 11) % 32)]) {
            let a = grad[(r, c)];
            if a.abs() < 1e-8 {
                continue;
            }
            let x = pred.value(r, c) as f64;
            let xp = (x * (1.0 + 1e-4)) as f32;
            let xm = (x * (1.0 - 1e-4)) as f32;
            let mut up = pred.values().clone();
            up[(r, c)] = xp;
            let mut dn = pred.values().clone();
            dn[(r, c)] = xm;
            let (fp, fm) = (eval(up), eval(dn));
            // Skip intervals containing an L1 kink (one-sided slopes split).
            let left = (f0 - fm) / (x - xm as f64);
            let right = (fp - f0) / (xp as f64 - x);
            if (left - right).abs() > 0.1 * left.abs().max(right.abs()) {
                continue;
            }
            let slope = (fp - fm) / (xp as f64 - xm as f64);
            let rel = (a - slope).abs() / a.abs().max(slope.abs());
            assert!(rel <= 1e-3, "pixel ({r}, {c}): analytic {a}, fd {slope}");
            checked += 1;
        }
        assert!(checked > 20, "only {checked} pixels checked");
    }

    #[test]
    fn config_defaults_serialize_expected_lambdas() {
        let cfg = LossConfig::default();
        let json = serde_json::to_value(&cfg).unwrap();
        assert_eq!(json["weights"]["silog"], 1.0);
        assert_eq!(json["weights"]["df"], 0.4);
        assert_eq!(json["weights"]["grad"], 5.0);
        assert_eq!(json["weights"]["normal"], 2.0);
        assert_eq!(json["weights"]["pts"], 2.0);
        assert_eq!(json["weights"]["mask"], 2.0);
        assert_eq!(json["silog_lambda"], 0.85);
    }

    #[test]
    fn config_rejects_bad_fields() {
        let cfg = LossConfig {
            edge_percentile: 0.0,
            ..LossConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        let toml_err = toml::from_str::<LossConfig>("unknown_knob = 3\n");
        assert!(toml_err.is_err());
    }
}
