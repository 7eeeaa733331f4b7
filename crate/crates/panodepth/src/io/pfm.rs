//! Grayscale PFM: `Pf`, dimensions, signed scale, f32 rows bottom-up.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::depth::DepthMap;
use crate::Result;

use super::{depth_from_values, format_err};

/// Byte-offset-tracking token reader over the PFM header.
struct Tokens<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Result<&'a str> {
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(
                self.path,
                Some(start as u64),
                "unexpected end of header",
            ));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .map_err(|_| format_err(self.path, Some(start as u64), "non-ASCII header token"))
    }
}

pub(super) fn read(path: &Path) -> Result<DepthMap> {
    let data = fs::read(path)?;
    let mut tok = Tokens {
        data: &data,
        pos: 0,
        path,
    };
    let magic = tok.next()?;
    match magic {
        "Pf" => {}
        "PF" => {
            return Err(format_err(
                path,
                Some(0),
                "color PFM (`PF`) is not supported, expected grayscale `Pf`",
            ))
        }
        other => {
            return Err(format_err(
                path,
                Some(0),
                format!("bad magic `{other}`, expected `Pf`"),
            ))
        }
    }
    let dim_pos = tok.pos as u64;
    let width: usize = tok
        .next()?
        .parse()
        .map_err(|_| format_err(path, Some(dim_pos), "unparseable width"))?;
    let height: usize = tok
        .next()?
        .parse()
        .map_err(|_| format_err(path, Some(dim_pos), "unparseable height"))?;
    let scale_pos = tok.pos as u64;
    let scale: f32 = tok
        .next()?
        .parse()
        .map_err(|_| format_err(path, Some(scale_pos), "unparseable scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err(path, Some(scale_pos), "scale must be nonzero"));
    }
    let little_endian = scale < 0.0;

    // Exactly one whitespace byte separates the scale from the payload.
    let payload_start = tok.pos + 1;
    let n_bytes = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .filter(|_| width > 0 && height > 0)
        .ok_or_else(|| format_err(path, Some(dim_pos), "dimension overflow or zero"))?;
    let available = data.len().saturating_sub(payload_start);
    if available < n_bytes {
        return Err(format_err(
            path,
            Some(data.len() as u64),
            format!("truncated payload: need {n_bytes} bytes, have {available}"),
        ));
    }
    if available > n_bytes {
        return Err(format_err(
            path,
            Some((payload_start + n_bytes) as u64),
            "trailing bytes after payload",
        ));
    }

    let mut values = Array2::zeros((height, width));
    for file_row in 0..height {
        // PFM stores the bottom image row first.
        let image_row = height - 1 - file_row;
        for col in 0..width {
            let at = payload_start + 4 * (file_row * width + col);
            let raw: [u8; 4] = data[at..at + 4].try_into().unwrap();
            values[(image_row, col)] = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
        }
    }
    depth_from_values(values)
}

pub(super) fn write(map: &DepthMap, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(32 + map.width() * map.height() * 4);
    write!(out, "Pf\n{} {}\n-1.0\n", map.width(), map.height())?;
    for image_row in (0..map.height()).rev() {
        for col in 0..map.width() {
            out.extend_from_slice(&map.value(image_row, col).to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use tempfile::tempdir;

    #[test]
    fn malformed_headers_report_offsets() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.pfm");

        std::fs::write(&path, b"P6\n2 2\n-1.0\n").unwrap();
        let err = read(&path).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Format {
                    offset: Some(0),
                    ..
                }
            ),
            "{err}"
        );

        std::fs::write(&path, b"Pf\n2 a\n-1.0\n").unwrap();
        assert!(read(&path).is_err());

        // 2x2 needs 16 payload bytes; give 8.
        let mut short = b"Pf\n2 2\n-1.0\n".to_vec();
        short.extend_from_slice(&[0u8; 8]);
        std::fs::write(&path, short).unwrap();
        let err = read(&path).unwrap_err();
        match err {
            Error::Format { offset, msg, .. } => {
                assert!(msg.contains("truncated"));
                assert!(offset.is_some());
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn big_endian_scale_sign_is_honored() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("be.pfm");
        let mut data = b"Pf\n1 1\n1.0\n".to_vec();
        data.extend_from_slice(&2.5f32.to_be_bytes());
        std::fs::write(&path, data).unwrap();
        let map = read(&path).unwrap();
        assert_eq!(map.value(0, 0), 2.5);
    }

    #[test]
    fn bottom_up_row_order() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("rows.pfm");
        let map = DepthMap::from_values(ndarray::array![[1.0f32], [2.0]]).unwrap();
        write(&map, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let payload = &bytes[bytes.len() - 8..];
        // Image row 1 (value 2.0) is the bottom row and must come first.
        assert_eq!(f32::from_le_bytes(payload[0..4].try_into().unwrap()), 2.0);
        assert_eq!(f32::from_le_bytes(payload[4..8].try_into().unwrap()), 1.0);
    }
}
