//! Automatic seed placement: threshold the liver intensity band, keep the
//! largest blob on the patient-right side, and put a 16³ box at its centroid.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{connected_components, Connectivity, Geometry, Mask3D, Volume3D};

pub const SEED_SIDE: usize = 16;

/// Units of the input intensities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityMode {
    /// Hounsfield units; liver band `[40, 60]`.
    #[default]
    Hu,
    /// 8-bit windowed gray levels; liver band `[125, 155]`.
    Gray,
}

impl IntensityMode {
    pub fn liver_band(self) -> (f64, f64) {
        match self {
            IntensityMode::Hu => (40.0, 60.0),
            IntensityMode::Gray => (125.0, 155.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizationOptions {
    pub mode: IntensityMode,
    /// Patient-right is the high-x half instead of the low-x half.
    pub flip_lr: bool,
}

/// Seed voxel and its box `[lo, hi)` clamped to the volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedRegion {
    pub centroid: [f64; 3],
    pub center: [usize; 3],
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    /// Set when the whole-volume component was used because the right half was empty.
    pub fallback: bool,
}

impl SeedRegion {
    /// Box of side [`SEED_SIDE`] starting 8 voxels before `center`, clamped to `dims`.
    pub fn around(center: [usize; 3], dims: [usize; 3]) -> Self {
        let half = SEED_SIDE / 2;
        let lo = [0, 1, 2].map(|a| center[a].saturating_sub(half));
        let hi = [0, 1, 2].map(|a| (center[a] + half).min(dims[a]));
        SeedRegion {
            centroid: center.map(|c| c as f64),
            center,
            lo,
            hi,
            fallback: false,
        }
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] < self.hi[a])
    }

    pub fn mask(&self, geometry: Geometry) -> Mask3D {
        Mask3D::from_fn(geometry, |x, y, z| self.contains([x, y, z]))
    }
}

impl fmt::Display for SeedRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [cx, cy, cz] = self.center;
        let [x0, y0, z0] = self.lo;
        let [x1, y1, z1] = self.hi;
        write!(f, "center {cx} {cy} {cz}; box {x0} {y0} {z0} {x1} {y1} {z1}")
    }
}

/// Liver-band threshold followed by one 3³ majority pass (window clipped at
/// the volume border, strict majority of the in-volume neighbours).
pub fn threshold_liver(vol: &Volume3D, mode: IntensityMode) -> Mask3D {
    let (lo, hi) = mode.liver_band();
    let g = *vol.geometry();
    let band: Vec<u32> = vol.data().iter().map(|&v| u32::from((lo..=hi).contains(&v))).collect();
    let sums = box3_sum(&band, g.dims);
    let [nx, ny, nz] = g.dims;
    let width = |c: usize, n: usize| (c + 2).min(n) - c.saturating_sub(1);
    Mask3D::from_fn(g, |x, y, z| {
        let n = width(x, nx) * width(y, ny) * width(z, nz);
        2 * sums[g.index(x, y, z)] as usize > n
    })
}

/// Separable 3×3×3 box sum with clipping at the borders.
fn box3_sum(data: &[u32], dims: [usize; 3]) -> Vec<u32> {
    let [nx, ny, nz] = dims;
    let strides = [1, nx, nx * ny];
    let mut cur = data.to_vec();
    for (axis, &n) in dims.iter().enumerate() {
        let s = strides[axis];
        let mut next = vec![0u32; cur.len()];
        for i in 0..cur.len() {
            let c = (i / s) % n;
            let mut acc = cur[i];
            if c > 0 {
                acc += cur[i - s];
            }
            if c + 1 < n {
                acc += cur[i + s];
            }
            next[i] = acc;
        }
        cur = next;
    }
    debug_assert_eq!(cur.len(), nx * ny * nz);
    cur
}

/// Whether column `x` lies on the patient-right half. The split is at
/// `floor(nx / 2)`; with `flip_lr` the halves are mirrored.
pub fn is_right_side(x: usize, nx: usize, flip_lr: bool) -> bool {
    let half = nx / 2;
    if flip_lr {
        x >= nx - half
    } else {
        x < half
    }
}

pub fn localize(vol: &Volume3D, opts: &LocalizationOptions) -> Result<SeedRegion> {
    let mask = threshold_liver(vol, opts.mode);
    let nx = vol.dims()[0];
    let right = Mask3D::from_fn(*vol.geometry(), |x, y, z| {
        is_right_side(x, nx, opts.flip_lr) && mask.get(x, y, z)
    });
    seed_from(&right).ok_or_else(|| Error::Localization("no liver-band voxels on the patient-right half".into()))
}

/// [`localize`], falling back to the largest component of the whole volume
/// when the right half has no liver-band voxels.
pub fn localize_with_fallback(vol: &Volume3D, opts: &LocalizationOptions) -> Result<SeedRegion> {
    match localize(vol, opts) {
        Err(Error::Localization(_)) => {
            let mask = threshold_liver(vol, opts.mode);
            let mut seed = seed_from(&mask)
                .ok_or_else(|| Error::Localization("no liver-band voxels in the volume".into()))?;
            seed.fallback = true;
            Ok(seed)
        }
        other => other,
    }
}

fn seed_from(mask: &Mask3D) -> Option<SeedRegion> {
    let comps = connected_components(mask, Connectivity::TwentySix);
    let label = comps.largest()?;
    let blob = comps.mask_of(mask, label);
    let c = blob.centroid().ok()?;
    let dims = mask.dims();
    let center = [0, 1, 2].map(|a| (c[a].round() as usize).min(dims[a] - 1));
    let mut seed = SeedRegion::around(center, dims);
    let g = *mask.geometry();
    let hits = |s: &SeedRegion| blob.foreground_indices().any(|i| s.contains(g.coords(i)));
    if !hits(&seed) {
        // centroid of a curved blob may sit away from it: recentre on its closest voxel
        let nearest = blob
            .foreground_indices()
            .map(|i| g.coords(i))
            .min_by(|a, b| {
                let d = |p: &[usize; 3]| (0..3).map(|k| (p[k] as f64 - c[k]).powi(2)).sum::<f64>();
                d(a).total_cmp(&d(b))
            })?;
        seed = SeedRegion::around(nearest, dims);
    }
    seed.centroid = c;
    Some(seed)
}
