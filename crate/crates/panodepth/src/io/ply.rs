//! ASCII PLY export for point clouds, with optional per-vertex normals.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::geometry::{NormalMap, PointCloud};
use crate::{Error, Result};

/// Writes one vertex per valid point; the header's vertex count equals the
/// valid-pixel count. Fails when no point is valid.
pub fn write_pointcloud(pc: &PointCloud, path: &Path) -> Result<()> {
    let n = pc.n_valid();
    if n == 0 {
        return Err(Error::invalid("point cloud has no valid points to write"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {n}")?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    writeln!(w, "end_header")?;
    for ((r, c), &ok) in pc.valid().indexed_iter() {
        if ok {
            let p = pc.point(r, c);
            writeln!(w, "{} {} {}", p.x as f32, p.y as f32, p.z as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Point cloud with per-vertex normals; vertices are pixels valid in both.
pub fn write_normals_ply(pc: &PointCloud, normals: &NormalMap, path: &Path) -> Result<()> {
    if (pc.width(), pc.height()) != (normals.width(), normals.height()) {
        return Err(Error::dims(
            "point cloud vs normals",
            (pc.width(), pc.height()),
            (normals.width(), normals.height()),
        ));
    }
    let joint = |r: usize, c: usize| pc.is_valid(r, c) && normals.is_valid(r, c);
    let mut n = 0usize;
    for r in 0..pc.height() {
        for c in 0..pc.width() {
            n += joint(r, c) as usize;
        }
    }
    if n == 0 {
        return Err(Error::invalid("no pixel has both a point and a normal"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {n}")?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    writeln!(w, "property float nx\nproperty float ny\nproperty float nz")?;
    writeln!(w, "end_header")?;
    for r in 0..pc.height() {
        for c in 0..pc.width() {
            if joint(r, c) {
                let p = pc.point(r, c);
                let nv = normals.normal(r, c);
                writeln!(
                    w,
                    "{} {} {} {} {} {}",
                    p.x as f32, p.y as f32, p.z as f32, nv.x as f32, nv.y as f32, nv.z as f32
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::DepthMap;
    use crate::geometry::backproject;
    use tempfile::tempdir;

    #[test]
    fn header_counts_valid_vertices_only() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pc.ply");
        let depth = DepthMap::from_fn(4, 2, |r, c| if (r + c) % 3 == 0 { Some(2.0) } else { None })
            .unwrap();
        let pc = backproject(&depth).unwrap();
        write_pointcloud(&pc, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(&format!("element vertex {}", pc.n_valid())));
        let body_lines = text.lines().skip_while(|l| *l != "end_header").count() - 1;
        assert_eq!(body_lines, pc.n_valid());
    }

    #[test]
    fn constant_depth_vertices_lie_on_the_sphere() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sphere.ply");
        let depth = DepthMap::constant(16, 8, 3.0).unwrap();
        write_pointcloud(&backproject(&depth).unwrap(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for line in text.lines().skip_while(|l| *l != "end_header").skip(1) {
            let v: Vec<f32> = line.split(' ').map(|t| t.parse().unwrap()).collect();
            let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((r - 3.0).abs() < 1e-5, "vertex radius {r}");
        }
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let dir = tempdir().unwrap();
        let depth = DepthMap::from_fn(4, 2, |_, _| None);
        // All-invalid maps are constructible; writing them is not.
        let pc = backproject(&depth.unwrap()).unwrap();
        assert!(write_pointcloud(&pc, &dir.path().join("x.ply")).is_err());
    }
}
