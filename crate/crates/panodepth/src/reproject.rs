//! ERP→perspective resampling over a 12-view icosahedral camera rig.
//!
//! Perspective patches give low-distortion views of the sphere for the
//! dense-fidelity loss; the exact adjoint of the bilinear resampler carries
//! patch-space gradients back to ERP pixels.

use nalgebra::Vector3;
use ndarray::Array2;

use crate::depth::DepthMap;
use crate::geometry::{Direction, ErpGrid};
use crate::{Error, Result};

/// Smallest field of view at which the 12 icosahedral frusta still cover the
/// sphere (twice the icosahedron covering radius, ≈ 74.75°); the rig
/// constructor gates at 75°.
pub const MIN_COVERING_FOV_DEG: f64 = 75.0;

/// Square pinhole camera defined by its optical axis and image-up direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PerspectiveCamera {
    forward: Direction,
    up: Direction,
    fov_deg: f64,
    size: usize,
}

impl PerspectiveCamera {
    /// Builds a camera; `forward` and `up` must be orthogonal within 1e-6,
    /// the field of view in `(0°, 180°)`, and the patch side at least 2 px.
    pub fn new(forward: Direction, up: Direction, fov_deg: f64, size: usize) -> Result<Self> {
        let dot = forward.vector().dot(&up.vector());
        if dot.abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "camera forward and up must be orthogonal, dot = {dot}"
            )));
        }
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::invalid(format!(
                "field of view must lie in (0, 180) degrees, got {fov_deg}"
            )));
        }
        if size < 2 {
            return Err(Error::invalid(format!(
                "patch size must be ≥ 2, got {size}"
            )));
        }
        Ok(PerspectiveCamera {
            forward,
            up,
            fov_deg,
            size,
        })
    }

    pub fn forward(&self) -> &Direction {
        &self.forward
    }

    pub fn up(&self) -> &Direction {
        &self.up
    }

    /// Image-right axis; the frame is right-handed with `right = up × forward`.
    pub fn right(&self) -> Vector3<f64> {
        self.up.vector().cross(&self.forward.vector())
    }

    pub fn fov_deg(&self) -> f64 {
        self.fov_deg
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn half_tan(&self) -> f64 {
        (self.fov_deg.to_radians() / 2.0).tan()
    }

    /// Ray through the patch pixel `(px, py)`; integer coordinates address
    /// pixel centers, row 0 is the top of the image.
    pub fn pixel_ray(&self, px: f64, py: f64) -> Direction {
        let t = self.half_tan();
        let s = self.size as f64;
        let xn = (2.0 * (px + 0.5) / s - 1.0) * t;
        let yn = (1.0 - 2.0 * (py + 0.5) / s) * t;
        let v = self.forward.vector() + self.right() * xn + self.up.vector() * yn;
        Direction::from_unit(v.normalize())
    }

    /// Whether a direction lies inside the view frustum (boundary inclusive).
    pub fn contains(&self, dir: &Direction) -> bool {
        let d = dir.vector();
        let f = d.dot(&self.forward.vector());
        if f <= 0.0 {
            return false;
        }
        let t = self.half_tan() * f;
        d.dot(&self.right()).abs() <= t && d.dot(&self.up.vector()).abs() <= t
    }
}

/// The 12 virtual cameras whose optical axes are icosahedron vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct IcosahedronRig {
    cameras: Vec<PerspectiveCamera>,
}

impl IcosahedronRig {
    /// Canonical vertex directions, before normalization: all cyclic
    /// permutations of `(0, ±1, ±φ)` with φ the golden ratio. Patch files and
    /// rig descriptions index cameras in this order.
    fn vertices() -> [Vector3<f64>; 12] {
        let p = (1.0 + 5.0_f64.sqrt()) / 2.0;
        [
            Vector3::new(0.0, 1.0, p),
            Vector3::new(0.0, 1.0, -p),
            Vector3::new(0.0, -1.0, p),
            Vector3::new(0.0, -1.0, -p),
            Vector3::new(1.0, p, 0.0),
            Vector3::new(1.0, -p, 0.0),
            Vector3::new(-1.0, p, 0.0),
            Vector3::new(-1.0, -p, 0.0),
            Vector3::new(p, 0.0, 1.0),
            Vector3::new(-p, 0.0, 1.0),
            Vector3::new(p, 0.0, -1.0),
            Vector3::new(-p, 0.0, -1.0),
        ]
    }

    /// Builds the 12-camera rig, refusing fields of view that leave coverage
    /// gaps (below [`MIN_COVERING_FOV_DEG`]).
    pub fn new(fov_deg: f64, size: usize) -> Result<Self> {
        if fov_deg < MIN_COVERING_FOV_DEG {
            return Err(Error::Coverage {
                fov_deg,
                required_deg: MIN_COVERING_FOV_DEG,
            });
        }
        Self::new_allow_gaps(fov_deg, size)
    }

    /// Escape hatch: builds the rig at any valid field of view, even one
    /// whose frusta do not cover the sphere.
    pub fn new_allow_gaps(fov_deg: f64, size: usize) -> Result<Self> {
        let global_up = Vector3::new(0.0, 1.0, 0.0);
        let pole_fallback = Vector3::new(0.0, 0.0, 1.0);
        let cameras = Self::vertices()
            .iter()
            .map(|axis| {
                let forward = axis.normalize();
                let mut up = global_up - forward * global_up.dot(&forward);
                if up.norm() < 1e-6 {
                    up = pole_fallback - forward * pole_fallback.dot(&forward);
                }
                PerspectiveCamera::new(
                    Direction::from_unit(forward),
                    Direction::from_unit(up.normalize()),
                    fov_deg,
                    size,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(IcosahedronRig { cameras })
    }

    pub fn cameras(&self) -> &[PerspectiveCamera] {
        &self.cameras
    }

    pub fn fov_deg(&self) -> f64 {
        self.cameras[0].fov_deg()
    }

    pub fn patch_size(&self) -> usize {
        self.cameras[0].size()
    }
}

/// Square depth patch resampled from an ERP map.
#[derive(Debug, Clone, PartialEq)]
pub struct PerspectivePatch {
    values: Array2<f32>,
    valid: Array2<bool>,
    camera: PerspectiveCamera,
}

impl PerspectivePatch {
    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    /// Patch depths; invalid pixels hold `0.0`.
    pub fn values(&self) -> &Array2<f32> {
        &self.values
    }

    pub fn valid(&self) -> &Array2<bool> {
        &self.valid
    }

    pub fn camera(&self) -> &PerspectiveCamera {
        &self.camera
    }
}

/// The four bilinear source taps for the fractional ERP coordinate `(u, v)`:
/// `(row, col, weight)`. Longitude wraps, latitude clamps, and the weights
/// always sum to 1.
pub(crate) fn bilinear_taps(grid: &ErpGrid, u: f64, v: f64) -> [(usize, usize, f64); 4] {
    let w = grid.width() as i64;
    let h = grid.height() as i64;
    let fu = u - u.floor();
    let fv = v - v.floor();
    let u0 = u.floor() as i64;
    let v0 = v.floor() as i64;
    let wrap = |x: i64| x.rem_euclid(w) as usize;
    let clamp = |y: i64| y.clamp(0, h - 1) as usize;
    [
        (clamp(v0), wrap(u0), (1.0 - fu) * (1.0 - fv)),
        (clamp(v0), wrap(u0 + 1), fu * (1.0 - fv)),
        (clamp(v0 + 1), wrap(u0), (1.0 - fu) * fv),
        (clamp(v0 + 1), wrap(u0 + 1), fu * fv),
    ]
}

/// f64 resampling core shared by the public patch op and the DF loss, which
/// needs full precision for gradient checks. A patch pixel is valid only when
/// all four of its source taps are valid; invalid pixels hold 0.
pub(crate) fn sample_patch_f64(
    values: &Array2<f32>,
    valid: &Array2<bool>,
    grid: &ErpGrid,
    cam: &PerspectiveCamera,
) -> (Array2<f64>, Array2<bool>) {
    let size = cam.size();
    let mut out = Array2::zeros((size, size));
    let mut ok = Array2::from_elem((size, size), false);
    for py in 0..size {
        for px in 0..size {
            let dir = cam.pixel_ray(px as f64, py as f64);
            let (u, v) = grid.dir_to_pixel(&dir);
            let taps = bilinear_taps(grid, u, v);
            if taps.iter().all(|&(r, c, _)| valid[(r, c)]) {
                out[(py, px)] = taps
                    .iter()
                    .map(|&(r, c, w)| values[(r, c)] as f64 * w)
                    .sum();
                ok[(py, px)] = true;
            }
        }
    }
    (out, ok)
}

/// Resamples an ERP depth map into one perspective patch.
///
/// Each patch pixel casts its pinhole ray, converts it to ERP coordinates,
/// and bilinearly interpolates depth (wrapping across the longitude seam);
/// a patch pixel stays valid only if all four source pixels were valid.
pub fn erp_to_perspective(map: &DepthMap, cam: &PerspectiveCamera) -> Result<PerspectivePatch> {
    let grid = ErpGrid::of(map)?;
    let (values, valid) = sample_patch_f64(map.values(), map.valid(), &grid, cam);
    Ok(PerspectivePatch {
        values: values.map(|&v| v as f32),
        valid,
        camera: cam.clone(),
    })
}

/// Exact adjoint of the bilinear resampling operator.
///
/// Scatters each patch-gradient entry back to its four ERP source pixels
/// with the forward interpolation weights, so `⟨S x, y⟩ = ⟨x, Sᵀ y⟩` holds
/// to rounding for any `x`, `y`.
pub fn erp_to_perspective_adjoint(
    patch_grad: &Array2<f64>,
    cam: &PerspectiveCamera,
    grid: &ErpGrid,
) -> Result<Array2<f64>> {
    let size = cam.size();
    if patch_grad.dim() != (size, size) {
        let (gh, gw) = patch_grad.dim();
        return Err(Error::dims(
            "patch gradient vs camera",
            (size, size),
            (gw, gh),
        ));
    }
    let mut out = Array2::zeros((grid.height(), grid.width()));
    for py in 0..size {
        for px in 0..size {
            let g = patch_grad[(py, px)];
            if g == 0.0 {
                continue;
            }
            let dir = cam.pixel_ray(px as f64, py as f64);
            let (u, v) = grid.dir_to_pixel(&dir);
            for (r, c, w) in bilinear_taps(grid, u, v) {
                out[(r, c)] += g * w;
            }
        }
    }
    Ok(out)
}

/// Fraction of ERP pixel-center directions inside at least one frustum.
pub fn coverage_check(cameras: &[PerspectiveCamera], grid: &ErpGrid) -> f64 {
    let mut covered = 0usize;
    for r in 0..grid.height() {
        for c in 0..grid.width() {
            let dir = grid.pixel_center_dir(r, c);
            if cameras.iter().any(|cam| cam.contains(&dir)) {
                covered += 1;
            }
        }
    }
    covered as f64 / (grid.width() * grid.height()) as f64
}
