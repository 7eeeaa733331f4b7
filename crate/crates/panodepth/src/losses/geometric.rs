//! Normal-field and point-cloud losses.

use nalgebra::Vector3;
use ndarray::Array2;

use crate::depth::DepthMap;
use crate::geometry::{normals_with_internals, u_neighbors, v_stencil, DistortionMap, ErpGrid};
use crate::{Error, Result};

use super::{check_weight_shape, weight_at, TermResult};

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean L1 distance between predicted and ground-truth unit normals.
///
/// Normals come from [`crate::geometry::normals_from_depth`]; only pixels
/// where both normal maps are valid contribute. The gradient flows through
/// normalization, the cross product, the difference stencils, and
/// back-projection onto each pixel's ray.
pub fn normal_loss(
    pred: &DepthMap,
    gt: &DepthMap,
    weights: Option<&DistortionMap>,
) -> Result<TermResult> {
    pred.same_shape(gt, "normal_loss pred vs gt")?;
    check_weight_shape(weights, pred.width(), pred.height())?;
    let (h, w) = (pred.height(), pred.width());
    let grid = ErpGrid::of(pred)?;

    let np = normals_with_internals(pred)?;
    let ng = normals_with_internals(gt)?;

    let mut sum_w = 0.0;
    let mut count = 0usize;
    for r in 0..h {
        for c in 0..w {
            if np.valid[(r, c)] && ng.valid[(r, c)] {
                sum_w += weight_at(weights, r, c);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyOverlap(
            "no pixel has a valid normal in both maps".into(),
        ));
    }

    let mut value = 0.0;
    let mut grad_points: Array2<Vector3<f64>> = Array2::from_elem((h, w), Vector3::zeros());
    for r in 0..h {
        for c in 0..w {
            if !(np.valid[(r, c)] && ng.valid[(r, c)]) {
                continue;
            }
            let diff = np.normals[(r, c)] - ng.normals[(r, c)];
            let wt = weight_at(weights, r, c);
            value += wt * (diff.x.abs() + diff.y.abs() + diff.z.abs());

            // d(loss)/d(normal), then back through n = σ·c/‖c‖.
            let s = Vector3::new(sign(diff.x), sign(diff.y), sign(diff.z)) * (wt / sum_w);
            let cross = np.cross[(r, c)];
            let norm = cross.norm();
            let unit = cross / norm;
            let g_c = (s - unit * unit.dot(&s)) * (np.flip[(r, c)] / norm);

            // c = tu × tv.
            let g_tu = np.tv[(r, c)].cross(&g_c);
            let g_tv = g_c.cross(&np.tu[(r, c)]);

            let (jp, jm) = u_neighbors(w, c);
            grad_points[(r, jp)] += g_tu;
            grad_points[(r, jm)] -= g_tu;
            let (rows, n_rows) = v_stencil(h, r);
            for &(row, coef) in &rows[..n_rows] {
                grad_points[(row, c)] += g_tv * coef;
            }
        }
    }
    value /= sum_w;

    // Points are depth × ray, so the depth gradient is the ray projection.
    let mut gradient = Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            gradient[(r, c)] = grad_points[(r, c)].dot(&grid.pixel_center_dir(r, c).vector());
        }
    }
    Ok(TermResult {
        value,
        gradient,
        pixels: count,
    })
}

/// Mean L1 distance between back-projected point clouds.
///
/// Since both clouds share the rays, the per-pixel term collapses to
/// `|pred − gt| · ‖ray‖₁`.
pub fn pts_loss(
    pred: &DepthMap,
    gt: &DepthMap,
    weights: Option<&DistortionMap>,
) -> Result<TermResult> {
    pred.same_shape(gt, "pts_loss pred vs gt")?;
    check_weight_shape(weights, pred.width(), pred.height())?;
    let (h, w) = (pred.height(), pred.width());
    let grid = ErpGrid::of(pred)?;

    let mut sum_w = 0.0;
    let mut count = 0usize;
    let mut sum = 0.0;
    let mut gradient = Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            if !(pred.is_valid(r, c) && gt.is_valid(r, c)) {
                continue;
            }
            let ray = grid.pixel_center_dir(r, c).vector();
            let l1_ray = ray.x.abs() + ray.y.abs() + ray.z.abs();
            let diff = pred.value(r, c) as f64 - gt.value(r, c) as f64;
            let wt = weight_at(weights, r, c);
            sum += wt * diff.abs() * l1_ray;
            gradient[(r, c)] = wt * sign(diff) * l1_ray;
            sum_w += wt;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyOverlap(
            "no jointly valid pixels for pts_loss".into(),
        ));
    }
    gradient.mapv_inplace(|g| g / sum_w);
    Ok(TermResult {
        value: sum / sum_w,
        gradient,
        pixels: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::backproject;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_map(seed: u64, w: usize, h: usize) -> DepthMap {
        let mut rng = StdRng::seed_from_u64(seed);
        DepthMap::from_fn(w, h, |_, _| Some(rng.gen_range(0.5f32..50.0))).unwrap()
    }

    #[test]
    fn normal_loss_zero_for_identical_maps() {
        let gt = random_map(1, 16, 8);
        let r = normal_loss(&gt, &gt, None).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn normal_loss_invariant_to_uniform_scale() {
        // Back-projection is homogeneous, so a uniformly scaled surface has
        // identical normals.
        let gt = random_map(2, 16, 8);
        let pred = DepthMap::from_values(gt.values().map(|v| v * 2.0)).unwrap();
        let r = normal_loss(&pred, &gt, None).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn normal_loss_positive_under_perturbation() {
        let gt = random_map(3, 16, 8);
        let mut values = gt.values().clone();
        values[(4, 7)] *= 1.5;
        let pred = DepthMap::from_values(values).unwrap();
        assert!(normal_loss(&pred, &gt, None).unwrap().value > 0.0);
    }

    #[test]
    fn normal_loss_empty_overlap_errors() {
        // Valid regions too small to host any normal stencil jointly.
        let a = DepthMap::from_fn(8, 8, |r, _| if r < 2 { Some(1.0) } else { None }).unwrap();
        let b = DepthMap::from_fn(8, 8, |r, _| if r >= 6 { Some(1.0) } else { None }).unwrap();
        assert!(matches!(
            normal_loss(&a, &b, None),
            Err(Error::EmptyOverlap(_))
        ));
    }

    #[test]
    fn pts_loss_zero_at_identity_and_forward_pixel_hand_value() {
        let gt = random_map(4, 12, 6);
        assert_abs_diff_eq!(
            pts_loss(&gt, &gt, None).unwrap().value,
            0.0,
            epsilon = 1e-12
        );

        // 3×3 grid: only the center pixel (ray exactly +z) is valid.
        let single = |d: f32| {
            DepthMap::from_fn(3, 3, |r, c| if (r, c) == (1, 1) { Some(d) } else { None }).unwrap()
        };
        let r = pts_loss(&single(2.0), &single(1.0), None).unwrap();
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-9);
        assert_eq!(r.pixels, 1);
    }

    #[test]
    fn pts_loss_matches_explicit_3d_subtraction() {
        let gt = random_map(5, 8, 4);
        let pred = random_map(6, 8, 4);
        let r = pts_loss(&pred, &gt, None).unwrap();

        let pc_p = backproject(&pred).unwrap();
        let pc_g = backproject(&gt).unwrap();
        let mut sum = 0.0;
        let mut n = 0usize;
        for row in 0..4 {
            for col in 0..8 {
                let d = pc_p.point(row, col) - pc_g.point(row, col);
                sum += d.x.abs() + d.y.abs() + d.z.abs();
                n += 1;
            }
        }
        assert_abs_diff_eq!(r.value, sum / n as f64, epsilon = 1e-9);
    }

    #[test]
    fn pts_loss_respects_distortion_weights() {
        let gt = random_map(7, 8, 4);
        let pred = random_map(8, 8, 4);
        let grid = ErpGrid::of(&gt).unwrap();
        let dm = crate::geometry::distortion_map(&grid);
        let r = pts_loss(&pred, &gt, Some(&dm)).unwrap();

        let mut num = 0.0;
        let mut den = 0.0;
        for row in 0..4 {
            for col in 0..8 {
                let ray = grid.pixel_center_dir(row, col).vector();
                let l1 = ray.x.abs() + ray.y.abs() + ray.z.abs();
                let diff = (pred.value(row, col) as f64 - gt.value(row, col) as f64).abs();
                num += dm.weight(row, col) * diff * l1;
                den += dm.weight(row, col);
            }
        }
        assert_abs_diff_eq!(r.value, num / den, epsilon = 1e-9);
    }
}
