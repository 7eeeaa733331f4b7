//! Raw little-endian f32 grids with a JSON dimension sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::Result;

use super::{depth_from_values, format_err};

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    width: usize,
    height: usize,
    unit: String,
}

/// Sidecar lives next to the payload as `<file>.json`.
fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".json");
    PathBuf::from(name)
}

/// Writes any f32 grid (depth, gradients, weights) with the given unit tag.
pub fn write_raw_f32_grid(values: &Array2<f32>, path: &Path, unit: &str) -> Result<()> {
    let (h, w) = values.dim();
    let mut bytes = Vec::with_capacity(w * h * 4);
    for r in 0..h {
        for c in 0..w {
            bytes.extend_from_slice(&values[(r, c)].to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    let sidecar = Sidecar {
        width: w,
        height: h,
        unit: unit.to_string(),
    };
    fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
    )?;
    Ok(())
}

/// Reads a raw f32 grid; dimensions come from the sidecar.
pub fn read_raw_f32_grid(path: &Path) -> Result<Array2<f32>> {
    let sc_path = sidecar_path(path);
    let sc_text = fs::read_to_string(&sc_path)
        .map_err(|e| format_err(&sc_path, None, format!("missing sidecar: {e}")))?;
    let sidecar: Sidecar = serde_json::from_str(&sc_text)
        .map_err(|e| format_err(&sc_path, None, format!("bad sidecar: {e}")))?;
    let data = fs::read(path)?;
    let expected = sidecar
        .width
        .checked_mul(sidecar.height)
        .and_then(|n| n.checked_mul(4))
        .filter(|_| sidecar.width > 0 && sidecar.height > 0)
        .ok_or_else(|| format_err(&sc_path, None, "dimension overflow or zero in sidecar"))?;
    if data.len() != expected {
        return Err(format_err(
            path,
            Some(data.len().min(expected) as u64),
            format!(
                "payload is {} bytes but sidecar implies {expected}",
                data.len()
            ),
        ));
    }
    let mut values = Array2::zeros((sidecar.height, sidecar.width));
    for r in 0..sidecar.height {
        for c in 0..sidecar.width {
            let at = 4 * (r * sidecar.width + c);
            values[(r, c)] = f32::from_le_bytes(data[at..at + 4].try_into().unwrap());
        }
    }
    Ok(values)
}

pub(super) fn read(path: &Path) -> Result<DepthMap> {
    depth_from_values(read_raw_f32_grid(path)?)
}

pub(super) fn write(map: &DepthMap, path: &Path) -> Result<()> {
    write_raw_f32_grid(map.values(), path, "m")
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn sidecar_mismatch_is_a_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("grid.raw");
        let values = Array2::from_elem((2, 3), 1.5f32);
        write_raw_f32_grid(&values, &path, "m").unwrap();
        // Corrupt the payload length.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, bytes).unwrap();
        let err = read_raw_f32_grid(&path).unwrap_err();
        assert!(err.to_string().contains("sidecar implies"));
    }

    #[test]
    fn missing_sidecar_is_reported() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("orphan.raw");
        std::fs::write(&path, [0u8; 4]).unwrap();
        assert!(read_raw_f32_grid(&path).is_err());
    }
}
