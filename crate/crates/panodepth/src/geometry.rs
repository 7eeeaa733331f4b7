//! Equirectangular (ERP) spherical geometry.
//!
//! One coordinate convention is fixed here and inherited by every other
//! module: the world frame is y-up, z-forward, x-right; a pixel grid of
//! `W×H` covers the full 360°×180° sphere; the continuous pixel coordinate
//! `(u, v)` maps to longitude/latitude through the half-pixel offset
//!
//! ```text
//! θ = 2π(u + 0.5)/W − π          (longitude, −π at the left edge)
//! φ = π/2 − π(v + 0.5)/H         (latitude, +π/2 at the top edge)
//! d = (cos φ sin θ, sin φ, cos φ cos θ)
//! ```
//!
//! so integer `(u, v) = (col, row)` addresses the center of that pixel.
//! Longitude is periodic: every horizontal stencil in this crate wraps
//! across the seam.

use std::f64::consts::PI;

use nalgebra::Vector3;
use ndarray::Array2;

use crate::depth::DepthMap;
use crate::{Error, Result};

/// Unit 3D view ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction(Vector3<f64>);

impl Direction {
    /// Normalizes `(x, y, z)`; fails on a near-zero vector.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Vector3::new(x, y, z);
        let n = v.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::invalid(format!(
                "direction ({x}, {y}, {z}) cannot be normalized"
            )));
        }
        Ok(Direction(v / n))
    }

    pub(crate) fn from_unit(v: Vector3<f64>) -> Self {
        debug_assert!((v.norm() - 1.0).abs() < 1e-9);
        Direction(v)
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn vector(&self) -> Vector3<f64> {
        self.0
    }
}

/// ERP pixel lattice covering the full sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErpGrid {
    width: usize,
    height: usize,
}

impl ErpGrid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 1 {
            return Err(Error::invalid(format!(
                "ERP grid must be at least 2x1, got {width}x{height}"
            )));
        }
        Ok(ErpGrid { width, height })
    }

    /// Grid matching a depth map's dimensions.
    pub fn of(map: &DepthMap) -> Result<Self> {
        Self::new(map.width(), map.height())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// View ray for the fractional pixel coordinate `(u, v)`.
    ///
    /// `u` must lie in `[0, width)` and `v` in `[0, height)`; integer inputs
    /// address pixel centers.
    pub fn pixel_to_dir(&self, u: f64, v: f64) -> Result<Direction> {
        if !(u.is_finite() && v.is_finite() && (0.0..self.width as f64).contains(&u))
            || !(0.0..self.height as f64).contains(&v)
        {
            return Err(Error::invalid(format!(
                "pixel coordinate ({u}, {v}) outside {}x{} grid",
                self.width, self.height
            )));
        }
        Ok(self.pixel_to_dir_unchecked(u, v))
    }

    fn pixel_to_dir_unchecked(&self, u: f64, v: f64) -> Direction {
        let theta = 2.0 * PI * (u + 0.5) / self.width as f64 - PI;
        let phi = PI / 2.0 - PI * (v + 0.5) / self.height as f64;
        let (sin_t, cos_t) = theta.sin_cos();
        let (sin_p, cos_p) = phi.sin_cos();
        Direction::from_unit(Vector3::new(cos_p * sin_t, sin_p, cos_p * cos_t))
    }

    /// Center ray of pixel `(row, col)`.
    pub fn pixel_center_dir(&self, row: usize, col: usize) -> Direction {
        debug_assert!(row < self.height && col < self.width);
        self.pixel_to_dir_unchecked(col as f64, row as f64)
    }

    /// Inverse of [`ErpGrid::pixel_to_dir`].
    ///
    /// Longitude wraps into `[0, width)`; `v` spans `[−0.5, height − 0.5]`.
    /// The poles (`d = ±y`) resolve to the v-extremes with an arbitrary `u`.
    pub fn dir_to_pixel(&self, d: &Direction) -> (f64, f64) {
        let phi = d.y().clamp(-1.0, 1.0).asin();
        let theta = d.x().atan2(d.z());
        let u = self.width as f64 * (theta + PI) / (2.0 * PI) - 0.5;
        let v = self.height as f64 * (PI / 2.0 - phi) / PI - 0.5;
        (u.rem_euclid(self.width as f64), v)
    }
}

/// Columns left/right of `j` with horizontal wrap.
pub(crate) fn u_neighbors(width: usize, j: usize) -> (usize, usize) {
    ((j + 1) % width, (j + width - 1) % width)
}

/// Vertical difference stencil at row `i`: `(rows, coefficients, count)`.
///
/// Interior rows use the symmetric two-point chord; the top and bottom rows
/// fall back to a one-sided three-point second-order stencil so boundary
/// tangents keep the same accuracy order as interior ones.
pub(crate) fn v_stencil(height: usize, i: usize) -> ([(usize, f64); 3], usize) {
    debug_assert!(height >= 3);
    if i == 0 {
        ([(0, -1.5), (1, 2.0), (2, -0.5)], 3)
    } else if i == height - 1 {
        (
            [(height - 1, 1.5), (height - 2, -2.0), (height - 3, 0.5)],
            3,
        )
    } else {
        ([(i + 1, 1.0), (i - 1, -1.0), (0, 0.0)], 2)
    }
}

/// Per-pixel weights compensating ERP's latitude-dependent pixel density.
///
/// Row weight is the cosine of the row-center latitude (the exact ERP area
/// element), rescaled so the whole-map mean is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMap {
    weights: Array2<f64>,
}

impl DistortionMap {
    pub fn width(&self) -> usize {
        self.weights.ncols()
    }

    pub fn height(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[(row, col)]
    }
}

/// Mean-one latitude weights for `grid` (see [`DistortionMap`]).
pub fn distortion_map(grid: &ErpGrid) -> DistortionMap {
    let h = grid.height();
    let raw: Vec<f64> = (0..h)
        .map(|r| (PI / 2.0 - PI * (r as f64 + 0.5) / h as f64).cos())
        .collect();
    let mean = raw.iter().sum::<f64>() / h as f64;
    let weights = Array2::from_shape_fn((h, grid.width()), |(r, _)| raw[r] / mean);
    DistortionMap { weights }
}

/// `H×W` grid of 3D points in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Array2<Vector3<f64>>,
    valid: Array2<bool>,
}

impl PointCloud {
    pub fn width(&self) -> usize {
        self.points.ncols()
    }

    pub fn height(&self) -> usize {
        self.points.nrows()
    }

    pub fn points(&self) -> &Array2<Vector3<f64>> {
        &self.points
    }

    pub fn valid(&self) -> &Array2<bool> {
        &self.valid
    }

    pub fn point(&self, row: usize, col: usize) -> Vector3<f64> {
        self.points[(row, col)]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[(row, col)]
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Lifts a depth map to 3D: `point = depth × ray` at each pixel center.
///
/// Validity is copied from the depth map. Scaling all depths by `c > 0`
/// scales all points by `c`.
pub fn backproject(depth: &DepthMap) -> Result<PointCloud> {
    let grid = ErpGrid::of(depth)?;
    let points = Array2::from_shape_fn((grid.height(), grid.width()), |(r, c)| {
        grid.pixel_center_dir(r, c).vector() * depth.value(r, c) as f64
    });
    Ok(PointCloud {
        points,
        valid: depth.valid().clone(),
    })
}

/// `H×W` grid of unit surface normals.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    normals: Array2<Vector3<f64>>,
    valid: Array2<bool>,
}

impl NormalMap {
    pub fn width(&self) -> usize {
        self.normals.ncols()
    }

    pub fn height(&self) -> usize {
        self.normals.nrows()
    }

    pub fn normals(&self) -> &Array2<Vector3<f64>> {
        &self.normals
    }

    pub fn valid(&self) -> &Array2<bool> {
        &self.valid
    }

    pub fn normal(&self, row: usize, col: usize) -> Vector3<f64> {
        self.normals[(row, col)]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[(row, col)]
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Cross products with squared norm at or below this are treated as degenerate.
pub(crate) const DEGENERATE_CROSS: f64 = 1e-30;

/// Whether every pixel the normal stencil at `(i, j)` touches is valid.
pub(crate) fn normal_stencil_valid(valid: &Array2<bool>, i: usize, j: usize) -> bool {
    let (h, w) = valid.dim();
    let (jp, jm) = u_neighbors(w, j);
    if !(valid[(i, j)] && valid[(i, jp)] && valid[(i, jm)]) {
        return false;
    }
    let (rows, n) = v_stencil(h, i);
    rows[..n].iter().all(|&(r, _)| valid[(r, j)])
}

/// Normal field plus the intermediates the loss gradient chain needs.
pub(crate) struct NormalInternals {
    pub normals: Array2<Vector3<f64>>,
    pub valid: Array2<bool>,
    /// Unnormalized cross product `tu × tv`, before orientation flip.
    pub cross: Array2<Vector3<f64>>,
    /// Orientation sign σ applied so that `normal · ray < 0`.
    pub flip: Array2<f64>,
    pub tu: Array2<Vector3<f64>>,
    pub tv: Array2<Vector3<f64>>,
}

pub(crate) fn normals_with_internals(depth: &DepthMap) -> Result<NormalInternals> {
    let (w, h) = (depth.width(), depth.height());
    if w < 3 || h < 3 {
        return Err(Error::invalid(format!(
            "normals need at least a 3x3 map, got {w}x{h}"
        )));
    }
    let grid = ErpGrid::of(depth)?;
    let pc = backproject(depth)?;
    let mut out = NormalInternals {
        normals: Array2::from_elem((h, w), Vector3::zeros()),
        valid: Array2::from_elem((h, w), false),
        cross: Array2::from_elem((h, w), Vector3::zeros()),
        flip: Array2::from_elem((h, w), 1.0),
        tu: Array2::from_elem((h, w), Vector3::zeros()),
        tv: Array2::from_elem((h, w), Vector3::zeros()),
    };
    for i in 0..h {
        let (rows, n_rows) = v_stencil(h, i);
        for j in 0..w {
            if !normal_stencil_valid(depth.valid(), i, j) {
                continue;
            }
            let (jp, jm) = u_neighbors(w, j);
            let tu = pc.point(i, jp) - pc.point(i, jm);
            let mut tv = Vector3::zeros();
            for &(r, coef) in &rows[..n_rows] {
                tv += pc.point(r, j) * coef;
            }
            let cross = tu.cross(&tv);
            let norm_sq = cross.norm_squared();
            if norm_sq <= DEGENERATE_CROSS {
                continue;
            }
            let mut n = cross / norm_sq.sqrt();
            let mut flip = 1.0;
            if n.dot(&grid.pixel_center_dir(i, j).vector()) > 0.0 {
                n = -n;
                flip = -1.0;
            }
            out.normals[(i, j)] = n;
            out.valid[(i, j)] = true;
            out.cross[(i, j)] = cross;
            out.flip[(i, j)] = flip;
            out.tu[(i, j)] = tu;
            out.tv[(i, j)] = tv;
        }
    }
    Ok(out)
}

/// Surface normals from back-projected depth.
///
/// The normal at `(i, j)` is the normalized cross product of the horizontal
/// chord (wrapping across the seam) and the vertical difference stencil of
/// the back-projected points, oriented to face the camera
/// (`normal · ray < 0`). A pixel is invalid when its stencil touches an
/// invalid pixel or the cross product degenerates to zero length.
pub fn normals_from_depth(depth: &DepthMap) -> Result<NormalMap> {
    let internals = normals_with_internals(depth)?;
    Ok(NormalMap {
        normals: internals.normals,
        valid: internals.valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn pixel_to_dir_hand_value() {
        let g = ErpGrid::new(4, 2).unwrap();
        let d = g.pixel_to_dir(2.0, 0.0).unwrap();
        assert_abs_diff_eq!(d.x(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.y(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-8);
        assert_abs_diff_eq!(d.z(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn forward_axis_pixel() {
        // On an odd grid the center pixel looks exactly down +z.
        let g = ErpGrid::new(3, 3).unwrap();
        let d = g.pixel_center_dir(1, 1);
        assert_abs_diff_eq!(d.x(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.y(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.z(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn top_row_approaches_north_pole() {
        let g = ErpGrid::new(4, 10_000).unwrap();
        let d = g.pixel_to_dir(0.0, 0.0).unwrap();
        assert!(d.y() > 1.0 - 1e-7);
    }

    #[test]
    fn dir_to_pixel_hand_values() {
        let g = ErpGrid::new(8, 4).unwrap();
        let (u, v) = g.dir_to_pixel(&Direction::new(0.0, 0.0, 1.0).unwrap());
        assert_abs_diff_eq!(u, 3.5, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 1.5, epsilon = 1e-12);
        // The backward seam: longitude ±π lands at u ≡ −0.5 mod W.
        let (u, _) = g.dir_to_pixel(&Direction::new(0.0, 0.0, -1.0).unwrap());
        assert_abs_diff_eq!(u, 7.5, epsilon = 1e-12);
    }

    #[test]
    fn round_trip_interior_pixels() {
        // v stays within [0, H − 0.5]: beyond that band the latitude formula
        // runs past the pole and the mapping is no longer injective.
        let g = ErpGrid::new(17, 9).unwrap();
        for r in 0..8 {
            for c in 0..17 {
                let (u, v) = (c as f64 + 0.31, r as f64 + 0.57);
                let d = g.pixel_to_dir(u, v).unwrap();
                assert_abs_diff_eq!(d.vector().norm(), 1.0, epsilon = 1e-12);
                let (u2, v2) = g.dir_to_pixel(&d);
                assert_abs_diff_eq!(u2, u, epsilon = 1e-4);
                assert_abs_diff_eq!(v2, v, epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn out_of_range_pixel_rejected() {
        let g = ErpGrid::new(4, 2).unwrap();
        assert!(g.pixel_to_dir(-0.1, 0.0).is_err());
        assert!(g.pixel_to_dir(0.0, 2.0).is_err());
        assert!(g.pixel_to_dir(4.0, 0.0).is_err());
    }

    #[test]
    fn distortion_two_rows_normalizes_to_ones() {
        let g = ErpGrid::new(4, 2).unwrap();
        let m = distortion_map(&g);
        for &w in m.weights().iter() {
            assert_abs_diff_eq!(w, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn distortion_equator_row_and_mean_one() {
        let g = ErpGrid::new(6, 3).unwrap();
        let m = distortion_map(&g);
        // Raw weights are cos{60°, 0°, −60°} = {0.5, 1, 0.5}; mean 2/3.
        assert_abs_diff_eq!(m.weight(1, 0), 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.weight(0, 0), 0.75, epsilon = 1e-12);
        let mean = m.weights().iter().sum::<f64>() / (6.0 * 3.0);
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn distortion_rows_constant_and_decreasing_toward_poles() {
        let g = ErpGrid::new(5, 8).unwrap();
        let m = distortion_map(&g);
        for r in 0..8 {
            for c in 1..5 {
                assert_eq!(m.weight(r, c), m.weight(r, 0));
            }
        }
        for r in 0..3 {
            assert!(m.weight(r, 0) < m.weight(r + 1, 0), "row {r} toward north");
            assert!(
                m.weight(7 - r, 0) < m.weight(6 - r, 0),
                "row {} toward south",
                7 - r
            );
        }
        assert!(m.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn backproject_hand_values() {
        let g3 = DepthMap::constant(3, 3, 1.0).unwrap();
        let pc = backproject(&g3).unwrap();
        assert_abs_diff_eq!(pc.point(1, 1).z, 1.0, epsilon = 1e-12);

        let mut values = Array2::from_elem((2, 4), 1.0f32);
        values[(0, 2)] = 2.0;
        let pc = backproject(&DepthMap::from_values(values).unwrap()).unwrap();
        let p = pc.point(0, 2);
        assert_abs_diff_eq!(p.x, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.y, std::f64::consts::SQRT_2, epsilon = 1e-6);
        assert_abs_diff_eq!(p.z, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn backproject_homogeneous_under_depth_scaling() {
        let base =
            DepthMap::from_fn(8, 4, |r, c| Some(1.0 + 0.3 * r as f32 + 0.1 * c as f32)).unwrap();
        let scaled = DepthMap::from_values(base.values().map(|v| v * 2.0)).unwrap();
        let a = backproject(&base).unwrap();
        let b = backproject(&scaled).unwrap();
        for (pa, pb) in a.points().iter().zip(b.points().iter()) {
            assert_eq!(pa * 2.0, *pb);
        }
    }

    #[test]
    fn constant_depth_normals_face_the_camera() {
        // A constant-depth map is a centered sphere: normals must be −ray.
        let depth = DepthMap::constant(128, 64, 5.0).unwrap();
        let grid = ErpGrid::of(&depth).unwrap();
        let nm = normals_from_depth(&depth).unwrap();
        assert_eq!(nm.n_valid(), 128 * 64);
        let mut worst = 0.0f64;
        for r in 0..64 {
            for c in 0..128 {
                let err = (nm.normal(r, c) + grid.pixel_center_dir(r, c).vector()).norm();
                worst = worst.max(err);
            }
        }
        assert!(worst < 1e-3, "max normal deviation {worst}");
    }

    #[test]
    fn lower_hemisphere_plane_normals_point_up() {
        // Plane y = −h seen from the origin: depth = h / (−ray.y).
        let h_plane = 2.0f64;
        let (w, hh) = (128usize, 64usize);
        let grid = ErpGrid::new(w, hh).unwrap();
        let depth = DepthMap::from_fn(w, hh, |r, c| {
            let d = grid.pixel_center_dir(r, c);
            if d.y() < -0.05 {
                Some((h_plane / -d.y()) as f32)
            } else {
                None
            }
        })
        .unwrap();
        let nm = normals_from_depth(&depth).unwrap();
        let mut checked = 0;
        for r in 0..hh {
            for c in 0..w {
                if !nm.is_valid(r, c) {
                    continue;
                }
                let d = grid.pixel_center_dir(r, c);
                if d.y() > -0.25 {
                    continue; // near-horizon band excluded
                }
                let err = (nm.normal(r, c) - Vector3::new(0.0, 1.0, 0.0)).norm();
                assert!(err < 2e-2, "plane normal off by {err} at ({r}, {c})");
                checked += 1;
            }
        }
        assert!(checked > 500);
    }

    #[test]
    fn degenerate_cross_marks_pixel_invalid() {
        // Column depths chosen so the one-sided vertical stencil at (0, 1)
        // sums to the zero vector.
        let values = array![[1.0f32, 1.0, 1.0], [1.0, 0.75, 1.0], [1.0, 3.0, 1.0]];
        let depth = DepthMap::from_values(values).unwrap();
        let nm = normals_from_depth(&depth).unwrap();
        assert!(!nm.is_valid(0, 1));
        assert!(nm.is_valid(1, 1));
    }

    #[test]
    fn invalid_stencil_pixels_invalidate_normals() {
        let depth = DepthMap::from_fn(6, 5, |r, c| if (r, c) == (2, 3) { None } else { Some(4.0) })
            .unwrap();
        let nm = normals_from_depth(&depth).unwrap();
        for (i, j) in [(2, 3), (2, 2), (2, 4), (1, 3), (3, 3)] {
            assert!(!nm.is_valid(i, j), "({i}, {j}) should be invalid");
        }
        assert!(nm.is_valid(2, 0));
    }

    #[test]
    fn normals_reject_tiny_maps() {
        let depth = DepthMap::constant(2, 2, 1.0).unwrap();
        assert!(normals_from_depth(&depth).is_err());
    }
}
