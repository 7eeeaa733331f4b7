//! 16-bit grayscale PNG depth: counts = round(depth × scale), 0 = invalid.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, ImageReader, Luma};
use ndarray::Array2;

use crate::depth::DepthMap;
use crate::{Error, Result};

use super::format_err;

pub(super) fn read(path: &Path, scale: f32) -> Result<DepthMap> {
    check_scale(scale)?;
    let img = ImageReader::open(path)?
        .decode()
        .map_err(|e| format_err(path, None, format!("PNG decode failed: {e}")))?;
    let gray = match img {
        DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(format_err(
                path,
                None,
                format!("expected 16-bit grayscale PNG, got {:?}", other.color()),
            ))
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let mut values = Array2::zeros((h, w));
    let mut valid = Array2::from_elem((h, w), false);
    for (x, y, Luma([code])) in gray.enumerate_pixels() {
        if *code > 0 {
            values[(y as usize, x as usize)] = *code as f32 / scale;
            valid[(y as usize, x as usize)] = true;
        }
    }
    DepthMap::new(values, valid)
}

pub(super) fn write(map: &DepthMap, path: &Path, scale: f32) -> Result<()> {
    check_scale(scale)?;
    let mut buf = ImageBuffer::<Luma<u16>, Vec<u16>>::new(map.width() as u32, map.height() as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        let (r, c) = (y as usize, x as usize);
        let code = if map.is_valid(r, c) {
            (map.value(r, c) as f64 * scale as f64)
                .round()
                .clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        *px = Luma([code]);
    }
    let mut writer = BufWriter::new(File::create(path)?);
    DynamicImage::ImageLuma16(buf)
        .write_to(&mut writer, ImageFormat::Png)
        .map_err(|e| format_err(path, None, format!("PNG encode failed: {e}")))?;
    Ok(())
}

fn check_scale(scale: f32) -> Result<()> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid(format!(
            "PNG16 scale must be positive counts-per-meter, got {scale}"
        )));
    }
    Ok(())
}

/// Mask PNG: full-range 16-bit gray, `code = round(v·65535)`. Unlike depth
/// files there is no invalid sentinel; 0 is a legitimate mask value.
pub fn write_mask_png(mask: &crate::depth::BinaryMask, path: &Path) -> Result<()> {
    let mut buf =
        ImageBuffer::<Luma<u16>, Vec<u16>>::new(mask.width() as u32, mask.height() as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        let v = mask.value(y as usize, x as usize) as f64;
        *px = Luma([(v * 65535.0).round().clamp(0.0, 65535.0) as u16]);
    }
    let mut writer = BufWriter::new(File::create(path)?);
    DynamicImage::ImageLuma16(buf)
        .write_to(&mut writer, ImageFormat::Png)
        .map_err(|e| format_err(path, None, format!("PNG encode failed: {e}")))?;
    Ok(())
}

/// Reads a full-range 16-bit gray PNG as a soft mask in `[0, 1]`.
pub fn read_mask_png(path: &Path) -> Result<crate::depth::BinaryMask> {
    let img = ImageReader::open(path)?
        .decode()
        .map_err(|e| format_err(path, None, format!("PNG decode failed: {e}")))?;
    let gray = match img {
        DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(format_err(
                path,
                None,
                format!("expected 16-bit grayscale PNG, got {:?}", other.color()),
            ))
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let mut values = Array2::zeros((h, w));
    for (x, y, Luma([code])) in gray.enumerate_pixels() {
        values[(y as usize, x as usize)] = *code as f32 / 65535.0;
    }
    crate::depth::BinaryMask::new(values)
}
