//! Central finite-difference verification of the analytic loss gradients.
//!
//! The checker perturbs one input pixel at a time by ±1e-4 relative, rounds
//! the perturbed values through f32 storage exactly as a real map would, and
//! divides by the *actual* stored difference, so the only residual error is
//! the O(h²) truncation of the central difference.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::depth::{BinaryMask, DepthMap};
use crate::geometry::{distortion_map, ErpGrid};
use crate::losses::{
    df_gram, grad_loss, mask_loss, normal_loss, pts_loss, silog, sobel_edge_mask, LossConfig,
};
use crate::reproject::IcosahedronRig;
use crate::{Error, Result};

/// Relative perturbation of the central difference.
const FD_EPS: f64 = 1e-4;
/// Analytic gradients below this magnitude are not checked for relative error.
const GRAD_FLOOR: f64 = 1e-8;
/// One-sided slopes disagreeing by more than this (relative) mark a kink of
/// an L1-type term inside the perturbation interval; the central difference
/// estimates nothing there and the pixel is skipped. Smooth losses have
/// slope gaps of order FD_EPS, three orders below this.
const KINK_GAP: f64 = 0.1;

/// The six losses the checker knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Silog,
    Df,
    Grad,
    Normal,
    Pts,
    Mask,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Silog,
        LossKind::Df,
        LossKind::Grad,
        LossKind::Normal,
        LossKind::Pts,
        LossKind::Mask,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Silog => "silog",
            LossKind::Df => "df",
            LossKind::Grad => "grad",
            LossKind::Normal => "normal",
            LossKind::Pts => "pts",
            LossKind::Mask => "mask",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown loss `{s}` (expected one of silog, df, grad, normal, pts, mask)"
                ))
            })
    }
}

/// Outcome of one finite-difference run.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub loss: LossKind,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Worst relative error over checked pixels.
    pub max_rel_err: f64,
    /// Pixels whose analytic gradient exceeded the magnitude floor.
    pub n_checked: usize,
    /// Pixels skipped because the analytic gradient was below the floor.
    pub n_skipped: usize,
    /// Pixels skipped because a non-differentiable point fell inside the
    /// perturbation interval (one-sided slopes disagreed).
    pub n_nonsmooth: usize,
    pub pass: bool,
}

/// Random depth pair with depths in `[0.5, 50)` and ~5% invalid pixels.
pub fn random_depth_pair(seed: u64, width: usize, height: usize) -> (DepthMap, DepthMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen = |_: usize, _: usize| {
        if rng.gen_bool(0.05) {
            None
        } else {
            Some(rng.gen_range(0.5f32..50.0))
        }
    };
    let pred = DepthMap::from_fn(width, height, &mut gen).unwrap();
    let gt = DepthMap::from_fn(width, height, &mut gen).unwrap();
    (pred, gt)
}

/// Random soft prediction in `[0.05, 0.95]` against a random hard mask.
pub fn random_mask_pair(seed: u64, width: usize, height: usize) -> (BinaryMask, BinaryMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61736b);
    let soft = Array2::from_shape_fn((height, width), |_| rng.gen_range(0.05f32..0.95));
    let hard = Array2::from_shape_fn((height, width), |_| rng.gen_bool(0.5));
    (
        BinaryMask::new(soft).unwrap(),
        BinaryMask::from_bools(&hard),
    )
}

fn with_depth(map: &DepthMap, r: usize, c: usize, v: f32) -> DepthMap {
    let mut values = map.values().clone();
    values[(r, c)] = v;
    DepthMap::new(values, map.valid().clone()).expect("perturbed depth stays valid")
}

fn with_mask_value(mask: &BinaryMask, r: usize, c: usize, v: f32) -> BinaryMask {
    let mut values = mask.values().clone();
    values[(r, c)] = v;
    BinaryMask::new(values).expect("perturbed mask stays in range")
}

struct FdAccumulator {
    max_rel_err: f64,
    n_checked: usize,
    n_skipped: usize,
    n_nonsmooth: usize,
}

impl FdAccumulator {
    fn new() -> Self {
        FdAccumulator {
            max_rel_err: 0.0,
            n_checked: 0,
            n_skipped: 0,
            n_nonsmooth: 0,
        }
    }

    fn record(&mut self, analytic: f64, left: f64, right: f64, central: f64) {
        if analytic.abs() <= GRAD_FLOOR {
            self.n_skipped += 1;
            return;
        }
        let gap = (left - right).abs() / left.abs().max(right.abs()).max(1e-12);
        if gap > KINK_GAP {
            self.n_nonsmooth += 1;
            return;
        }
        let rel = (analytic - central).abs() / analytic.abs().max(central.abs());
        self.max_rel_err = self.max_rel_err.max(rel);
        self.n_checked += 1;
    }
}

/// Checks one loss's analytic gradient against central finite differences on
/// a seeded random instance. `pass` reflects the tolerance; pixels whose
/// gradient magnitude is at most 1e-8 are skipped.
pub fn grad_check(
    kind: LossKind,
    width: usize,
    height: usize,
    seed: u64,
    tolerance: f64,
    cfg: &LossConfig,
) -> Result<GradCheckReport> {
    cfg.validate()?;
    let mut acc = FdAccumulator::new();
    match kind {
        LossKind::Mask => {
            let (pred, gt) = random_mask_pair(seed, width, height);
            let weights = if cfg.use_distortion {
                Some(distortion_map(&ErpGrid::new(width, height)?))
            } else {
                None
            };
            let eval = |m: &BinaryMask| -> Result<f64> {
                Ok(mask_loss(m, &gt, weights.as_ref(), cfg.mask_variant)?.value)
            };
            let analytic = mask_loss(&pred, &gt, weights.as_ref(), cfg.mask_variant)?.gradient;
            let f0 = eval(&pred)?;
            for r in 0..height {
                for c in 0..width {
                    let x = pred.value(r, c) as f64;
                    let xp = (x * (1.0 + FD_EPS)) as f32;
                    let xm = (x * (1.0 - FD_EPS)) as f32;
                    let fp = eval(&with_mask_value(&pred, r, c, xp))?;
                    let fm = eval(&with_mask_value(&pred, r, c, xm))?;
                    acc.record(
                        analytic[(r, c)],
                        (f0 - fm) / (x - xm as f64),
                        (fp - f0) / (xp as f64 - x),
                        (fp - fm) / (xp as f64 - xm as f64),
                    );
                }
            }
        }
        _ => {
            let (pred, gt) = random_depth_pair(seed, width, height);
            let grid = ErpGrid::new(width, height)?;
            let weights = cfg.use_distortion.then(|| distortion_map(&grid));
            let rig = IcosahedronRig::new(cfg.df_fov_deg, cfg.df_patch_size)?;
            let edge = sobel_edge_mask(&gt, cfg.edge_percentile)?;
            let w = weights.as_ref();
            let eval = |m: &DepthMap| -> Result<f64> {
                Ok(match kind {
                    LossKind::Silog => silog(m, &gt, w, cfg.silog_lambda)?.value,
                    LossKind::Df => df_gram(m, &gt, &rig)?.value,
                    LossKind::Grad => grad_loss(m, &gt, &edge, w, cfg.silog_lambda)?.value,
                    LossKind::Normal => normal_loss(m, &gt, w)?.value,
                    LossKind::Pts => pts_loss(m, &gt, w)?.value,
                    LossKind::Mask => unreachable!(),
                })
            };
            let analytic = match kind {
                LossKind::Silog => silog(&pred, &gt, w, cfg.silog_lambda)?.gradient,
                LossKind::Df => df_gram(&pred, &gt, &rig)?.gradient,
                LossKind::Grad => grad_loss(&pred, &gt, &edge, w, cfg.silog_lambda)?.gradient,
                LossKind::Normal => normal_loss(&pred, &gt, w)?.gradient,
                LossKind::Pts => pts_loss(&pred, &gt, w)?.gradient,
                LossKind::Mask => unreachable!(),
            };
            let f0 = eval(&pred)?;
            for r in 0..height {
                for c in 0..width {
                    if !pred.is_valid(r, c) {
                        // Invalid pixels cannot influence any loss.
                        debug_assert_eq!(analytic[(r, c)], 0.0);
                        acc.n_skipped += 1;
                        continue;
                    }
                    let x = pred.value(r, c) as f64;
                    let xp = (x * (1.0 + FD_EPS)) as f32;
                    let xm = (x * (1.0 - FD_EPS)) as f32;
                    let fp = eval(&with_depth(&pred, r, c, xp))?;
                    let fm = eval(&with_depth(&pred, r, c, xm))?;
                    acc.record(
                        analytic[(r, c)],
                        (f0 - fm) / (x - xm as f64),
                        (fp - f0) / (xp as f64 - x),
                        (fp - fm) / (xp as f64 - xm as f64),
                    );
                }
            }
        }
    }
    Ok(GradCheckReport {
        loss: kind,
        width,
        height,
        seed,
        tolerance,
        max_rel_err: acc.max_rel_err,
        n_checked: acc.n_checked,
        n_skipped: acc.n_skipped,
        n_nonsmooth: acc.n_nonsmooth,
        pass: acc.max_rel_err <= tolerance && acc.n_checked > 0,
    })
}
