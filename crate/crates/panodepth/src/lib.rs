//! Geometry, losses, metrics, and data curation for equirectangular
//! (360° x 180°) metric depth maps.
//!
//! The crate is organized around a small set of value types — [`DepthMap`],
//! [`BinaryMask`], [`ErpGrid`], [`IcosahedronRig`] — and pure functions over
//! them:
//!
//! - [`depth`] — depth maps, soft/hard masks, range-mask generation.
//! - [`geometry`] — ERP pixel↔ray mapping, latitude distortion weights,
//!   back-projection, surface normals from depth.
//! - [`reproject`] — ERP→perspective resampling over a 12-view icosahedral
//!   camera rig, with the exact adjoint for gradient transport.
//! - [`losses`] — the six training losses (SILog, DF-Gram, gradient, normal,
//!   point-cloud, mask) with analytic gradients and a distortion-weighted
//!   total.
//! - [`gradcheck`] — central finite-difference verification of those
//!   gradients.
//! - [`metrics`] — AbsRel / RMSE / δ-accuracy evaluation and aggregation.
//! - [`curation`] — manifest-driven three-stage pseudo-label pipeline with
//!   external labeler/scorer process contracts.
//! - [`io`] — PFM / 16-bit PNG / raw f32 depth files and ASCII PLY point
//!   clouds.
//!
//! Every capability has a runnable demo under `examples/`; the `panodepth`
//! binary exposes the same operations for batch scripting.
//!
//! All values are immutable after construction and safe to share across
//! threads.

pub mod cli;
pub mod curation;
pub mod depth;
mod error;
pub mod geometry;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod reproject;

pub use depth::{apply_range_mask, gt_range_mask, BinaryMask, DepthMap, RangeThreshold};
pub use error::{Error, Result};
pub use geometry::{
    backproject, distortion_map, normals_from_depth, Direction, DistortionMap, ErpGrid, NormalMap,
    PointCloud,
};
pub use losses::{
    df_gram, grad_loss, mask_loss, normal_loss, pts_loss, silog, sobel_edge_mask, total_loss,
    EdgeMask, LossConfig, LossReport, LossWeights, MaskLossVariant, TermResult,
};
pub use metrics::{aggregate, evaluate, AggregateMode, EvalConfig, MetricsReport};
pub use reproject::{
    coverage_check, erp_to_perspective, erp_to_perspective_adjoint, IcosahedronRig,
    PerspectiveCamera, PerspectivePatch,
};
