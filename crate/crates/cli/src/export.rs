//! Grayscale slice images with the mask contour drawn in red.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{Rgb, RgbImage};
use sparseg::volume::{window_to_8bit, Mask3D, Volume3D};
use sparseg::{Error, Result};

pub const CONTOUR: Rgb<u8> = Rgb([255, 0, 0]);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    Axial,
    Coronal,
    Sagittal,
}

impl FromStr for Plane {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "axial" => Ok(Plane::Axial),
            "coronal" => Ok(Plane::Coronal),
            "sagittal" => Ok(Plane::Sagittal),
            _ => Err(format!("unknown plane `{s}` (axial, coronal or sagittal)")),
        }
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Plane::Axial => "axial",
            Plane::Coronal => "coronal",
            Plane::Sagittal => "sagittal",
        })
    }
}

impl Plane {
    /// Number of slices, image width and image height for volume dims.
    pub fn layout(self, [nx, ny, nz]: [usize; 3]) -> (usize, usize, usize) {
        match self {
            Plane::Axial => (nz, nx, ny),
            Plane::Coronal => (ny, nx, nz),
            Plane::Sagittal => (nx, ny, nz),
        }
    }

    /// Voxel shown at pixel `(u, v)` of slice `k`. Coronal and sagittal
    /// images put the last z slice on the top row.
    pub fn voxel(self, dims: [usize; 3], k: usize, u: usize, v: usize) -> [usize; 3] {
        let top = |v: usize| dims[2] - 1 - v;
        match self {
            Plane::Axial => [u, v, k],
            Plane::Coronal => [u, k, top(v)],
            Plane::Sagittal => [k, u, top(v)],
        }
    }
}

/// Mask pixels of a 2-D slice with a 4-neighbour outside the mask or the image.
pub fn boundary_pixels(inside: &dyn Fn(usize, usize) -> bool, w: usize, h: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for v in 0..h {
        for u in 0..w {
            if !inside(u, v) {
                continue;
            }
            let edge = u == 0
                || v == 0
                || u + 1 == w
                || v + 1 == h
                || !inside(u - 1, v)
                || !inside(u + 1, v)
                || !inside(u, v - 1)
                || !inside(u, v + 1);
            if edge {
                out.push((u, v));
            }
        }
    }
    out
}

/// Renders every slice of `plane` into `dir` as `<plane>_<index>.png` and
/// returns the written paths in slice order.
pub fn export_slices(
    vol: &Volume3D,
    mask: &Mask3D,
    plane: Plane,
    window: (f64, f64),
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    mask.check_same_geometry(vol.geometry())?;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let gray = window_to_8bit(vol, window.0, window.1)?;
    let dims = vol.dims();
    let (slices, w, h) = plane.layout(dims);
    let digits = slices.to_string().len().max(3);
    let mut paths = Vec::with_capacity(slices);
    for k in 0..slices {
        let at = |u: usize, v: usize| plane.voxel(dims, k, u, v);
        let mut img = RgbImage::from_fn(w as u32, h as u32, |u, v| {
            let [x, y, z] = at(u as usize, v as usize);
            let g = gray.get(x, y, z) as u8;
            Rgb([g, g, g])
        });
        let inside = |u: usize, v: usize| {
            let [x, y, z] = at(u, v);
            mask.get(x, y, z)
        };
        for (u, v) in boundary_pixels(&inside, w, h) {
            img.put_pixel(u as u32, v as u32, CONTOUR);
        }
        let path = dir.join(format!("{plane}_{k:0digits$}.png"));
        img.save(&path)
            .map_err(|e| Error::Format(format!("cannot write {}: {e}", path.display())))?;
        paths.push(path);
    }
    Ok(paths)
}
