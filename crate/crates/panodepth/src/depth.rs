//! Depth maps, binary masks, and range-mask generation.
//!
//! A [`DepthMap`] pairs an `H×W` grid of metric depths (meters) with an
//! explicit validity mask; invalid pixels never contribute to losses or
//! metrics. Validity is a boolean mask rather than a sentinel value, so the
//! arithmetic downstream never has to special-case NaNs or zeros. Stored
//! values at invalid pixels are normalized to `0.0`, which is also the
//! on-disk sentinel used by the `io` module.

use ndarray::Array2;

use crate::{Error, Result};

/// Dense grid of metric depths in meters with a per-pixel validity mask.
///
/// Invariants enforced at construction: both grids share the same shape with
/// at least one pixel, every valid pixel holds a finite depth `> 0`, and
/// every invalid pixel stores `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    values: Array2<f32>,
    valid: Array2<bool>,
}

impl DepthMap {
    /// Builds a depth map from raw values and a validity mask.
    ///
    /// Values at invalid pixels are zeroed. Fails if the shapes differ, a
    /// dimension is zero, or a valid pixel carries a non-positive or
    /// non-finite depth.
    pub fn new(mut values: Array2<f32>, valid: Array2<bool>) -> Result<Self> {
        if values.dim() != valid.dim() {
            let (h, w) = values.dim();
            let (vh, vw) = valid.dim();
            return Err(Error::dims("depth values vs validity", (w, h), (vw, vh)));
        }
        let (h, w) = values.dim();
        if h == 0 || w == 0 {
            return Err(Error::invalid(format!(
                "depth map must have at least one pixel, got {w}x{h}"
            )));
        }
        for ((r, c), &ok) in valid.indexed_iter() {
            let v = values[(r, c)];
            if ok {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::NonPositiveDepth {
                        row: r,
                        col: c,
                        value: v,
                    });
                }
            } else {
                values[(r, c)] = 0.0;
            }
        }
        Ok(DepthMap { values, valid })
    }

    /// Builds an all-valid depth map from values alone.
    pub fn from_values(values: Array2<f32>) -> Result<Self> {
        let valid = Array2::from_elem(values.dim(), true);
        Self::new(values, valid)
    }

    /// Builds a map by evaluating `f(row, col)`; `None` marks the pixel invalid.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> Option<f32>,
    ) -> Result<Self> {
        let mut values = Array2::zeros((height, width));
        let mut valid = Array2::from_elem((height, width), false);
        for r in 0..height {
            for c in 0..width {
                if let Some(v) = f(r, c) {
                    values[(r, c)] = v;
                    valid[(r, c)] = true;
                }
            }
        }
        Self::new(values, valid)
    }

    /// All-valid map holding the same depth everywhere.
    pub fn constant(width: usize, height: usize, depth: f32) -> Result<Self> {
        Self::from_values(Array2::from_elem((height, width), depth))
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    /// Depth values, row-major `H×W`; invalid pixels hold `0.0`.
    pub fn values(&self) -> &Array2<f32> {
        &self.values
    }

    pub fn valid(&self) -> &Array2<bool> {
        &self.valid
    }

    pub fn value(&self, row: usize, col: usize) -> f32 {
        self.values[(row, col)]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[(row, col)]
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub(crate) fn same_shape(&self, other: &DepthMap, what: &'static str) -> Result<()> {
        if self.values.dim() != other.values.dim() {
            return Err(Error::dims(
                what,
                (self.width(), self.height()),
                (other.width(), other.height()),
            ));
        }
        Ok(())
    }
}

/// `H×W` mask with entries in `[0, 1]`.
///
/// Soft masks (e.g. network outputs) and hard `{0, 1}` masks share this type;
/// use [`BinaryMask::is_hard`] to distinguish them.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    values: Array2<f32>,
}

impl BinaryMask {
    /// Builds a mask, rejecting entries outside `[0, 1]`.
    pub fn new(values: Array2<f32>) -> Result<Self> {
        let (h, w) = values.dim();
        if h == 0 || w == 0 {
            return Err(Error::invalid(format!(
                "mask must have at least one pixel, got {w}x{h}"
            )));
        }
        for ((r, c), &v) in values.indexed_iter() {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(Error::invalid(format!(
                    "mask entry {v} at ({r}, {c}) outside [0, 1]"
                )));
            }
        }
        Ok(BinaryMask { values })
    }

    /// Hard mask from booleans.
    pub fn from_bools(values: &Array2<bool>) -> Self {
        BinaryMask {
            values: values.map(|&b| if b { 1.0 } else { 0.0 }),
        }
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f32> {
        &self.values
    }

    pub fn value(&self, row: usize, col: usize) -> f32 {
        self.values[(row, col)]
    }

    /// True when every entry is exactly 0 or 1.
    pub fn is_hard(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// Positive depth threshold in meters.
///
/// The standard presets are 10, 20, 50, and 100 m ([`RangeThreshold::PRESETS`]);
/// any positive value is accepted for custom use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeThreshold {
    meters: f32,
}

impl RangeThreshold {
    /// The four standard truncation presets, in meters.
    pub const PRESETS: [f32; 4] = [10.0, 20.0, 50.0, 100.0];

    /// Validates a threshold; non-positive or non-finite values are rejected.
    pub fn new(meters: f32) -> Result<Self> {
        if !(meters.is_finite() && meters > 0.0) {
            return Err(Error::invalid(format!(
                "range threshold must be positive and finite, got {meters}"
            )));
        }
        Ok(RangeThreshold { meters })
    }

    pub fn meters(&self) -> f32 {
        self.meters
    }
}

/// Hard mask marking pixels whose ground-truth depth lies within `t`.
///
/// A pixel is 1 iff it is valid and its depth is `≤ t`; invalid pixels map
/// to 0, so the result is always a subset of the validity mask.
pub fn gt_range_mask(depth: &DepthMap, t: RangeThreshold) -> BinaryMask {
    let mask = Array2::from_shape_fn((depth.height(), depth.width()), |(r, c)| {
        depth.is_valid(r, c) && depth.value(r, c) <= t.meters()
    });
    BinaryMask::from_bools(&mask)
}

/// Multiplies a depth map by a mask, element-wise.
///
/// Output values are `depth × mask`; a pixel stays valid only if it was valid
/// and the mask exceeds 0.5 there.
pub fn apply_range_mask(depth: &DepthMap, mask: &BinaryMask) -> Result<DepthMap> {
    if (depth.height(), depth.width()) != (mask.height(), mask.width()) {
        return Err(Error::dims(
            "depth vs mask",
            (depth.width(), depth.height()),
            (mask.width(), mask.height()),
        ));
    }
    let values = Array2::from_shape_fn((depth.height(), depth.width()), |(r, c)| {
        depth.value(r, c) * mask.value(r, c)
    });
    let valid = Array2::from_shape_fn((depth.height(), depth.width()), |(r, c)| {
        depth.is_valid(r, c) && mask.value(r, c) > 0.5
    });
    DepthMap::new(values, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn map_1x3(depths: [f32; 3]) -> DepthMap {
        DepthMap::from_values(array![[depths[0], depths[1], depths[2]]]).unwrap()
    }

    #[test]
    fn range_mask_thresholds_directly() {
        let d = map_1x3([5.0, 15.0, 150.0]);
        let m = gt_range_mask(&d, RangeThreshold::new(100.0).unwrap());
        assert_eq!(m.values().as_slice().unwrap(), &[1.0, 1.0, 0.0]);
        assert!(m.is_hard());
    }

    #[test]
    fn range_mask_preset_10m_on_near_map_is_all_ones() {
        let d = DepthMap::constant(4, 2, 5.0).unwrap();
        let m = gt_range_mask(&d, RangeThreshold::new(RangeThreshold::PRESETS[0]).unwrap());
        assert!(m.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn range_mask_zeroes_invalid_pixels() {
        let d = DepthMap::new(array![[2.0, 3.0]], array![[true, false]]).unwrap();
        let m = gt_range_mask(&d, RangeThreshold::new(100.0).unwrap());
        assert_eq!(m.values().as_slice().unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn non_positive_threshold_rejected() {
        assert!(RangeThreshold::new(0.0).is_err());
        assert!(RangeThreshold::new(-3.0).is_err());
        assert!(RangeThreshold::new(f32::NAN).is_err());
    }

    #[test]
    fn apply_identity_and_annihilation() {
        let d = map_1x3([1.0, 2.0, 3.0]);
        let ones = BinaryMask::new(Array2::from_elem((1, 3), 1.0)).unwrap();
        let zeros = BinaryMask::new(Array2::from_elem((1, 3), 0.0)).unwrap();
        assert_eq!(apply_range_mask(&d, &ones).unwrap(), d);
        let none = apply_range_mask(&d, &zeros).unwrap();
        assert_eq!(none.n_valid(), 0);
    }

    #[test]
    fn apply_elementwise_product_and_validity() {
        let d = DepthMap::from_values(array![[2.0, 30.0]]).unwrap();
        let m = BinaryMask::new(array![[1.0, 0.0]]).unwrap();
        let out = apply_range_mask(&d, &m).unwrap();
        assert_eq!(out.values().as_slice().unwrap(), &[2.0, 0.0]);
        assert_eq!(out.valid().as_slice().unwrap(), &[true, false]);
    }

    #[test]
    fn apply_rejects_dimension_mismatch() {
        let d = DepthMap::constant(3, 1, 1.0).unwrap();
        let m = BinaryMask::new(Array2::from_elem((1, 2), 1.0)).unwrap();
        assert!(matches!(
            apply_range_mask(&d, &m),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn truncation_roundtrip_keeps_near_invalidates_far() {
        let d = map_1x3([5.0, 100.0, 100.5]);
        let t = RangeThreshold::new(100.0).unwrap();
        let out = apply_range_mask(&d, &gt_range_mask(&d, t)).unwrap();
        assert!(out.is_valid(0, 0) && out.value(0, 0) == 5.0);
        assert!(out.is_valid(0, 1) && out.value(0, 1) == 100.0);
        assert!(!out.is_valid(0, 2));
    }

    #[test]
    fn range_mask_monotone_in_threshold() {
        let d = map_1x3([5.0, 15.0, 150.0]);
        let m10 = gt_range_mask(&d, RangeThreshold::new(10.0).unwrap());
        let m50 = gt_range_mask(&d, RangeThreshold::new(50.0).unwrap());
        for (a, b) in m10.values().iter().zip(m50.values().iter()) {
            assert!(a <= b);
        }
    }

    #[test]
    fn valid_pixel_with_zero_depth_rejected() {
        let err = DepthMap::new(array![[0.0]], array![[true]]);
        assert!(matches!(err, Err(Error::NonPositiveDepth { .. })));
    }

    #[test]
    fn invalid_pixels_are_normalized_to_zero() {
        let d = DepthMap::new(array![[7.5, 1.0]], array![[false, true]]).unwrap();
        assert_eq!(d.value(0, 0), 0.0);
    }

    #[test]
    fn soft_mask_is_not_hard() {
        let m = BinaryMask::new(array![[0.25, 1.0]]).unwrap();
        assert!(!m.is_hard());
        assert!(BinaryMask::new(array![[1.5]]).is_err());
    }
}
