//! Scale-invariant logarithmic loss and its edge-restricted variant.

use ndarray::Array2;

use crate::depth::DepthMap;
use crate::geometry::DistortionMap;
use crate::{Error, Result};

use super::{check_weight_shape, weight_at, EdgeMask, TermResult};

/// Core SILog accumulation over an explicit pixel filter.
fn silog_over(
    pred: &DepthMap,
    gt: &DepthMap,
    weights: Option<&DistortionMap>,
    lambda: f64,
    keep: impl Fn(usize, usize) -> bool,
) -> Result<Option<TermResult>> {
    let (h, w) = (pred.height(), pred.width());
    let mut sum_w = 0.0;
    let mut sum_d = 0.0;
    let mut sum_dd = 0.0;
    let mut count = 0usize;
    let mut log_diff = Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            if !(keep(r, c) && pred.is_valid(r, c) && gt.is_valid(r, c)) {
                continue;
            }
            let p = pred.value(r, c);
            let g = gt.value(r, c);
            if p <= 0.0 {
                return Err(Error::NonPositiveDepth {
                    row: r,
                    col: c,
                    value: p,
                });
            }
            if g <= 0.0 {
                return Err(Error::NonPositiveDepth {
                    row: r,
                    col: c,
                    value: g,
                });
            }
            let d = (p as f64).ln() - (g as f64).ln();
            let wt = weight_at(weights, r, c);
            log_diff[(r, c)] = d;
            sum_w += wt;
            sum_d += wt * d;
            sum_dd += wt * d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Ok(None);
    }
    let mean_d = sum_d / sum_w;
    let value = sum_dd / sum_w - lambda * mean_d * mean_d;

    let mut gradient = Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            if !(keep(r, c) && pred.is_valid(r, c) && gt.is_valid(r, c)) {
                continue;
            }
            let wt = weight_at(weights, r, c);
            let d = log_diff[(r, c)];
            gradient[(r, c)] = 2.0 * wt / sum_w * (d - lambda * mean_d) / pred.value(r, c) as f64;
        }
    }
    Ok(Some(TermResult {
        value,
        gradient,
        pixels: count,
    }))
}

/// Scale-invariant log loss `E[d²] − λ(E[d])²` with `d = ln pred − ln gt`.
///
/// Means run over jointly valid pixels, latitude-weighted when `weights` is
/// given. Fails when no pixel is jointly valid.
pub fn silog(
    pred: &DepthMap,
    gt: &DepthMap,
    weights: Option<&DistortionMap>,
    lambda: f64,
) -> Result<TermResult> {
    pred.same_shape(gt, "silog pred vs gt")?;
    check_weight_shape(weights, pred.width(), pred.height())?;
    silog_over(pred, gt, weights, lambda, |_, _| true)?
        .ok_or_else(|| Error::EmptyOverlap("no jointly valid pixels for silog".into()))
}

/// SILog restricted to the pixels of an edge mask.
///
/// The mask restricts the domain rather than multiplying depths (a literal
/// product would push zeros into the logs). An empty edge mask yields 0 with
/// a zero gradient.
pub fn grad_loss(
    pred: &DepthMap,
    gt: &DepthMap,
    edge: &EdgeMask,
    weights: Option<&DistortionMap>,
    lambda: f64,
) -> Result<TermResult> {
    pred.same_shape(gt, "grad_loss pred vs gt")?;
    if (edge.width(), edge.height()) != (pred.width(), pred.height()) {
        return Err(Error::dims(
            "edge mask vs depth",
            (pred.width(), pred.height()),
            (edge.width(), edge.height()),
        ));
    }
    check_weight_shape(weights, pred.width(), pred.height())?;
    if edge.n_edges() == 0 {
        return Ok(TermResult {
            value: 0.0,
            gradient: Array2::zeros((pred.height(), pred.width())),
            pixels: 0,
        });
    }
    silog_over(pred, gt, weights, lambda, |r, c| edge.is_edge(r, c))?
        .ok_or_else(|| Error::EmptyOverlap("no jointly valid pixels inside the edge mask".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::sobel_edge_mask;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    const E: f32 = std::f32::consts::E;

    #[test]
    fn zero_when_pred_equals_gt() {
        let gt = DepthMap::from_values(array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let r = silog(&gt, &gt, None, 0.85).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-12);
        assert!(r.gradient.iter().all(|&g| g.abs() < 1e-12));
        assert_eq!(r.pixels, 6);
    }

    #[test]
    fn uniform_scale_by_e_gives_one_minus_lambda() {
        let gt = DepthMap::from_values(array![[1.0, 2.5], [0.7, 9.0]]).unwrap();
        let pred = DepthMap::from_values(gt.values().map(|v| v * E)).unwrap();
        let r = silog(&pred, &gt, None, 0.85).unwrap();
        assert_abs_diff_eq!(r.value, 0.15, epsilon = 1e-6);
    }

    #[test]
    fn symmetric_log_errors_hand_value() {
        let gt = DepthMap::from_values(array![[1.0, 1.0]]).unwrap();
        let pred = DepthMap::from_values(array![[E, 1.0 / E]]).unwrap();
        let r = silog(&pred, &gt, None, 0.85).unwrap();
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn empty_overlap_is_an_error() {
        let a = DepthMap::new(array![[1.0, 2.0]], array![[true, false]]).unwrap();
        let b = DepthMap::new(array![[1.0, 2.0]], array![[false, true]]).unwrap();
        assert!(matches!(
            silog(&a, &b, None, 0.85),
            Err(Error::EmptyOverlap(_))
        ));
    }

    #[test]
    fn scale_sweep_is_minimized_at_one() {
        // With λ < 1 the loss over pred = c·gt is (1−λ)(ln c)², minimal at c = 1.
        let gt = DepthMap::from_fn(8, 4, |r, c| Some(1.0 + r as f32 + 0.1 * c as f32)).unwrap();
        let mut best = (f64::MAX, 0.0f32);
        for k in 0..41 {
            let c = 0.5 + 0.025 * k as f32;
            let pred = DepthMap::from_values(gt.values().map(|v| v * c)).unwrap();
            let v = silog(&pred, &gt, None, 0.85).unwrap().value;
            if v < best.0 {
                best = (v, c);
            }
        }
        assert_abs_diff_eq!(best.1, 1.0, epsilon = 0.026);
    }

    #[test]
    fn value_ignores_appended_invalid_row() {
        let gt = DepthMap::from_values(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let pred = DepthMap::from_values(array![[1.5, 2.5], [2.0, 4.5]]).unwrap();
        let base = silog(&pred, &gt, None, 0.85).unwrap().value;
        let pad = |m: &DepthMap| {
            DepthMap::from_fn(2, 3, |r, c| if r < 2 { Some(m.value(r, c)) } else { None }).unwrap()
        };
        let padded = silog(&pad(&pred), &pad(&gt), None, 0.85).unwrap().value;
        assert_abs_diff_eq!(base, padded, epsilon = 1e-12);
    }

    #[test]
    fn grad_loss_zero_for_identical_maps_and_empty_mask() {
        let gt = DepthMap::from_fn(16, 8, |r, c| {
            Some(if c < 8 { 2.0 } else { 6.0 } + 0.01 * r as f32)
        })
        .unwrap();
        let edge = sobel_edge_mask(&gt, 90.0).unwrap();
        assert!(edge.n_edges() > 0);
        let r = grad_loss(&gt, &gt, &edge, None, 0.85).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-12);

        let flat = DepthMap::constant(16, 8, 3.0).unwrap();
        let empty = sobel_edge_mask(&flat, 90.0).unwrap();
        assert_eq!(empty.n_edges(), 0);
        let r = grad_loss(&gt, &flat, &empty, None, 0.85).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.pixels, 0);
    }

    #[test]
    fn grad_loss_matches_bruteforce_over_masked_pixels() {
        // Step-edge toy map with a known perturbation; the oracle recomputes
        // SILog from the explicit masked pixel list.
        let gt = DepthMap::from_fn(16, 8, |_, c| Some(if c < 8 { 2.0 } else { 6.0 })).unwrap();
        let pred = DepthMap::from_fn(16, 8, |r, c| {
            Some(gt.value(r, c) * (1.0 + 0.02 * ((r * 16 + c) % 7) as f32))
        })
        .unwrap();
        let edge = sobel_edge_mask(&gt, 90.0).unwrap();
        let r = grad_loss(&pred, &gt, &edge, None, 0.85).unwrap();

        let mut ds = Vec::new();
        for row in 0..8 {
            for col in 0..16 {
                if edge.is_edge(row, col) {
                    ds.push((pred.value(row, col) as f64).ln() - (gt.value(row, col) as f64).ln());
                }
            }
        }
        let n = ds.len() as f64;
        let mean = ds.iter().sum::<f64>() / n;
        let mean_sq = ds.iter().map(|d| d * d).sum::<f64>() / n;
        let expect = mean_sq - 0.85 * mean * mean;
        assert_abs_diff_eq!(r.value, expect, epsilon = 1e-6);
        assert_eq!(r.pixels, ds.len());
    }
}
