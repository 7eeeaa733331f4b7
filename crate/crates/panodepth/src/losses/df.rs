//! Dense-fidelity loss: Gram-matrix comparison over 12 perspective views.

use ndarray::Array2;

use crate::depth::DepthMap;
use crate::geometry::ErpGrid;
use crate::reproject::{erp_to_perspective_adjoint, sample_patch_f64, IcosahedronRig};
use crate::Result;

use super::TermResult;

/// Regularizer added to the per-patch standard deviation.
const SIGMA_EPS: f64 = 1e-6;

struct Standardized {
    /// Normalized patch; pixels outside the joint-valid set hold 0.
    x: Array2<f64>,
    sigma: f64,
    n: usize,
}

fn standardize(patch: &Array2<f64>, joint: &Array2<bool>) -> Standardized {
    let mut n = 0usize;
    let mut sum = 0.0;
    for (idx, &ok) in joint.indexed_iter() {
        if ok {
            sum += patch[idx];
            n += 1;
        }
    }
    let mean = sum / n as f64;
    let mut var = 0.0;
    for (idx, &ok) in joint.indexed_iter() {
        if ok {
            let d = patch[idx] - mean;
            var += d * d;
        }
    }
    let sigma = (var / n as f64).sqrt();
    let scale = sigma + SIGMA_EPS;
    let x = Array2::from_shape_fn(patch.dim(), |idx| {
        if joint[idx] {
            (patch[idx] - mean) / scale
        } else {
            0.0
        }
    });
    Standardized { x, sigma, n }
}

/// Backpropagates a gradient through per-patch standardization.
///
/// `g` is ∂loss/∂x restricted to the joint-valid set (entries elsewhere are
/// ignored because x is structurally zero there).
fn standardize_backward(g: &Array2<f64>, std: &Standardized, joint: &Array2<bool>) -> Array2<f64> {
    let n = std.n as f64;
    let s = std.sigma + SIGMA_EPS;
    let mut sum_g = 0.0;
    let mut sum_gy = 0.0;
    for (idx, &ok) in joint.indexed_iter() {
        if ok {
            sum_g += g[idx];
            sum_gy += g[idx] * std.x[idx];
        }
    }
    // σ = 0 means a constant patch: the sqrt is non-differentiable there and
    // x ≡ 0, so only the shift terms survive.
    let sigma_term = if std.sigma > 0.0 {
        sum_gy / (n * std.sigma)
    } else {
        0.0
    };
    Array2::from_shape_fn(g.dim(), |idx| {
        if joint[idx] {
            g[idx] / s - sum_g / (n * s) - std.x[idx] * sigma_term
        } else {
            0.0
        }
    })
}

/// Gram-similarity loss averaged over the rig's 12 views.
///
/// Per view: resample both maps to a `P×P` patch, standardize each over the
/// jointly valid pixels (invalid entries become 0), form the Gram matrices
/// `G = X Xᵀ`, and take `‖G_pred − G_gt‖²_F / P²`. Views with fewer than two
/// jointly valid pixels are excluded and the average count adjusted. The
/// gradient chains `4(G_pred − G_gt)X / P²` through standardization and the
/// resampling adjoint back to ERP pixels.
///
/// Standardization makes the value invariant to positive affine rescaling of
/// either input (up to the σ-regularizer).
pub fn df_gram(pred: &DepthMap, gt: &DepthMap, rig: &IcosahedronRig) -> Result<TermResult> {
    pred.same_shape(gt, "df_gram pred vs gt")?;
    let grid = ErpGrid::of(pred)?;
    let p = rig.patch_size();
    let p_sq = (p * p) as f64;

    let mut total = 0.0;
    let mut included = 0usize;
    let mut pixels = 0usize;
    let mut gradient = Array2::zeros((pred.height(), pred.width()));
    for cam in rig.cameras() {
        let (pp, pv) = sample_patch_f64(pred.values(), pred.valid(), &grid, cam);
        let (gp, gv) = sample_patch_f64(gt.values(), gt.valid(), &grid, cam);
        let joint = Array2::from_shape_fn((p, p), |idx| pv[idx] && gv[idx]);
        let n = joint.iter().filter(|&&b| b).count();
        if n < 2 {
            continue;
        }
        included += 1;
        pixels += n;

        let sp = standardize(&pp, &joint);
        let sg = standardize(&gp, &joint);
        let gram_p = sp.x.dot(&sp.x.t());
        let gram_g = sg.x.dot(&sg.x.t());
        let delta = &gram_p - &gram_g;
        total += delta.iter().map(|d| d * d).sum::<f64>() / p_sq;

        let g_x = delta.dot(&sp.x) * (4.0 / p_sq);
        let g_patch = standardize_backward(&g_x, &sp, &joint);
        let g_erp = erp_to_perspective_adjoint(&g_patch, cam, &grid)?;
        gradient.zip_mut_with(&g_erp, |acc, &g| *acc += g);
    }

    if included == 0 {
        return Ok(TermResult {
            value: 0.0,
            gradient,
            pixels: 0,
        });
    }
    let inv = 1.0 / included as f64;
    gradient.mapv_inplace(|g| g * inv);
    Ok(TermResult {
        value: total * inv,
        gradient,
        pixels,
    })
}
