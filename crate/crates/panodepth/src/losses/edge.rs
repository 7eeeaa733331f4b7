//! Edge mask from ground-truth Sobel gradient magnitudes.

use ndarray::Array2;

use crate::depth::DepthMap;
use crate::geometry::u_neighbors;
use crate::{Error, Result};

/// Hard mask of high-gradient pixels plus the percentile that produced it.
///
/// Always a subset of the ground-truth validity mask: only pixels whose full
/// 3×3 Sobel stencil (wrapping horizontally, excluding the top and bottom
/// rows) is valid can be edges.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMask {
    mask: Array2<bool>,
    percentile: f64,
}

impl EdgeMask {
    pub fn width(&self) -> usize {
        self.mask.ncols()
    }

    pub fn height(&self) -> usize {
        self.mask.nrows()
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn is_edge(&self, row: usize, col: usize) -> bool {
        self.mask[(row, col)]
    }

    pub fn n_edges(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn percentile(&self) -> f64 {
        self.percentile
    }
}

/// Magnitudes at or below this are treated as zero: accumulation rounding
/// on constant regions leaves ~1e-15 of dust, while the smallest genuine
/// log-depth step between adjacent f32 depths is ~6e-8.
const MAG_FLOOR: f64 = 1e-12;

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Marks pixels whose log-depth Sobel magnitude exceeds the `percentile`-th
/// percentile of all defined magnitudes.
///
/// Gradients are taken on `ln(gt)`, so the mask is invariant to uniform
/// depth rescaling. An all-invalid (or constant) map yields an empty mask.
pub fn sobel_edge_mask(gt: &DepthMap, percentile: f64) -> Result<EdgeMask> {
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(Error::invalid(format!(
            "edge percentile must lie in (0, 100), got {percentile}"
        )));
    }
    let (w, h) = (gt.width(), gt.height());
    if w < 3 || h < 3 {
        return Err(Error::invalid(format!(
            "sobel edge mask needs at least a 3x3 map, got {w}x{h}"
        )));
    }

    let mut magnitude = Array2::from_elem((h, w), f64::NAN);
    let mut pool = Vec::new();
    for r in 1..h - 1 {
        for c in 0..w {
            let (cp, cm) = u_neighbors(w, c);
            let cols = [cm, c, cp];
            let rows = [r - 1, r, r + 1];
            let mut ok = true;
            let mut gx = 0.0;
            let mut gy = 0.0;
            for (ri, &row) in rows.iter().enumerate() {
                for (ci, &col) in cols.iter().enumerate() {
                    if !gt.is_valid(row, col) {
                        ok = false;
                        break;
                    }
                    let ln_d = (gt.value(row, col) as f64).ln();
                    gx += SOBEL_X[ri][ci] * ln_d;
                    gy += SOBEL_Y[ri][ci] * ln_d;
                }
                if !ok {
                    break;
                }
            }
            if ok {
                let m = gx.hypot(gy);
                magnitude[(r, c)] = m;
                pool.push(m);
            }
        }
    }

    let mut mask = Array2::from_elem((h, w), false);
    if !pool.is_empty() {
        pool.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = ((percentile / 100.0) * pool.len() as f64).floor() as usize;
        let threshold = pool[k.min(pool.len() - 1)];
        // ≥ keeps tied magnitudes (a clean step edge has identical values all
        // along the band); the floor keeps constant regions out.
        for ((r, c), &m) in magnitude.indexed_iter() {
            if !m.is_nan() && m > MAG_FLOOR && m >= threshold {
                mask[(r, c)] = true;
            }
        }
    }
    Ok(EdgeMask { mask, percentile })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_map_has_no_edges() {
        let gt = DepthMap::constant(8, 6, 4.0).unwrap();
        assert_eq!(sobel_edge_mask(&gt, 90.0).unwrap().n_edges(), 0);
    }

    #[test]
    fn all_invalid_map_gives_empty_mask() {
        let values = Array2::from_elem((4, 6), 0.0f32);
        let valid = Array2::from_elem((4, 6), false);
        let gt = DepthMap::new(values, valid).unwrap();
        assert_eq!(sobel_edge_mask(&gt, 90.0).unwrap().n_edges(), 0);
    }

    #[test]
    fn vertical_step_confines_mask_to_edge_bands() {
        // Two constant regions on a periodic domain meet twice: at the step
        // column and at the wrap seam. Sobel support is one column on either
        // side of each boundary.
        let (w, step) = (32usize, 16usize);
        let gt = DepthMap::from_fn(w, 8, |_, c| Some(if c < step { 2.0 } else { 8.0 })).unwrap();
        let edge = sobel_edge_mask(&gt, 90.0).unwrap();
        assert!(edge.n_edges() > 0);
        let band = [step - 1, step, w - 1, 0];
        for ((r, c), &e) in edge.mask().indexed_iter() {
            if e {
                assert!(band.contains(&c), "unexpected edge at ({r}, {c})");
            }
        }
    }

    #[test]
    fn percentile_selects_roughly_ten_percent() {
        let mut rng = StdRng::seed_from_u64(42);
        let gt = DepthMap::from_fn(64, 32, |_, _| Some(rng.gen_range(0.5f32..50.0))).unwrap();
        let edge = sobel_edge_mask(&gt, 90.0).unwrap();
        // Magnitudes are defined on rows 1..H−1, so the pool has (H−2)·W entries.
        let pool = (32 - 2) * 64;
        let frac = edge.n_edges() as f64 / pool as f64;
        assert!((frac - 0.10).abs() < 0.01, "edge fraction {frac}");
    }

    #[test]
    fn mask_is_subset_of_validity() {
        let mut rng = StdRng::seed_from_u64(9);
        let gt = DepthMap::from_fn(24, 12, |_, _| {
            if rng.gen_bool(0.2) {
                None
            } else {
                Some(rng.gen_range(0.5f32..50.0))
            }
        })
        .unwrap();
        let edge = sobel_edge_mask(&gt, 80.0).unwrap();
        for ((r, c), &e) in edge.mask().indexed_iter() {
            if e {
                assert!(gt.is_valid(r, c));
            }
        }
    }

    #[test]
    fn invalid_percentile_rejected() {
        let gt = DepthMap::constant(4, 4, 1.0).unwrap();
        assert!(sobel_edge_mask(&gt, 0.0).is_err());
        assert!(sobel_edge_mask(&gt, 100.0).is_err());
    }
}
