//! Bit-exact readers and writers for depth maps and point clouds.
//!
//! Three depth formats share one validity convention: a stored value of 0
//! marks an invalid pixel (matching [`crate::DepthMap`]'s normalization of
//! invalid entries to 0).
//!
//! - **PFM** — the de-facto grayscale float format: `Pf` header, dimensions,
//!   a scale whose sign encodes endianness, rows bottom-up. Lossless.
//! - **PNG16** — 16-bit grayscale PNG storing `round(depth × scale)` counts,
//!   clamped to `[0, 65535]`. Quantization error is at most `1/(2·scale)`.
//! - **RAWF32** — row-major little-endian `f32` payload with a JSON sidecar
//!   `{width, height, unit}` at `<path>.json`. Lossless.

mod pfm;
mod ply;
mod png16;
mod rawf32;

use std::path::Path;

use crate::depth::DepthMap;
use crate::{Error, Result};

pub use ply::{write_normals_ply, write_pointcloud};
pub use png16::{read_mask_png, write_mask_png};
pub use rawf32::{read_raw_f32_grid, write_raw_f32_grid};

/// On-disk depth encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthFileFormat {
    Pfm,
    /// 16-bit PNG at `scale` counts per meter.
    Png16 {
        scale: f32,
    },
    /// Raw little-endian f32 payload plus a `<path>.json` sidecar.
    RawF32,
}

impl DepthFileFormat {
    /// Picks a format from the file extension (`.pfm`, `.png`, `.raw`/`.f32`).
    pub fn from_path(path: &Path, png_scale: f32) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("pfm") => Ok(DepthFileFormat::Pfm),
            Some("png") => Ok(DepthFileFormat::Png16 { scale: png_scale }),
            Some("raw") | Some("f32") => Ok(DepthFileFormat::RawF32),
            _ => Err(Error::invalid(format!(
                "cannot infer depth format from `{}` (expected .pfm, .png, .raw, or .f32)",
                path.display()
            ))),
        }
    }
}

/// Reads a depth map in the given format.
pub fn read_depth(path: &Path, format: DepthFileFormat) -> Result<DepthMap> {
    match format {
        DepthFileFormat::Pfm => pfm::read(path),
        DepthFileFormat::Png16 { scale } => png16::read(path, scale),
        DepthFileFormat::RawF32 => rawf32::read(path),
    }
}

/// Writes a depth map in the given format.
pub fn write_depth(map: &DepthMap, path: &Path, format: DepthFileFormat) -> Result<()> {
    match format {
        DepthFileFormat::Pfm => pfm::write(map, path),
        DepthFileFormat::Png16 { scale } => png16::write(map, path, scale),
        DepthFileFormat::RawF32 => rawf32::write(map, path),
    }
}

pub(crate) fn format_err(path: &Path, offset: Option<u64>, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        msg: msg.into(),
    }
}

/// Shared validity rule: only finite positive stored values are valid depths.
pub(crate) fn depth_from_values(values: ndarray::Array2<f32>) -> Result<DepthMap> {
    let valid = values.map(|&v| v.is_finite() && v > 0.0);
    let values = values.map(|&v| if v.is_finite() && v > 0.0 { v } else { 0.0 });
    DepthMap::new(values, valid)
}
