//! Texture and intensity features of a small window around a single voxel.
//!
//! The output follows the first 37 rows of the region feature matrix (36
//! texture rows, then mean HU), so vectors can be compared against atoms
//! learned from region columns restricted to those rows.

use super::glcm::{QuantizedVolume, OFFSETS};
use super::haralick::{haralick_constant, haralick_sparse, HARALICK_COUNT};
use super::matrix::{FeatureConfig, HU_ROW};
use crate::error::{Error, Result};
use crate::volume::{Mask3D, Volume3D};

pub const LOCAL_FEATURE_COUNT: usize = HU_ROW + 1;

pub struct LocalFeatureExtractor<'a> {
    vol: &'a Volume3D,
    quantized: QuantizedVolume,
    radius: [usize; 3],
}

impl<'a> LocalFeatureExtractor<'a> {
    /// `radius` is the half-width of the window along x, y, z in voxels.
    pub fn new(vol: &'a Volume3D, cfg: &FeatureConfig, radius: [usize; 3]) -> Result<Self> {
        LocalFeatureExtractor::masked(vol, None, cfg, radius)
    }

    /// Windows only see voxels inside `mask`.
    pub fn masked(vol: &'a Volume3D, mask: Option<&Mask3D>, cfg: &FeatureConfig, radius: [usize; 3]) -> Result<Self> {
        if radius[0] == 0 && radius[1] == 0 {
            return Err(Error::Parameter("local window needs in-plane extent".into()));
        }
        let quantized = QuantizedVolume::from_hu(vol, mask, cfg.window_center, cfg.window_width, cfg.levels)?;
        Ok(LocalFeatureExtractor { vol, quantized, radius })
    }

    pub fn radius(&self) -> [usize; 3] {
        self.radius
    }

    /// Features of the window centred on `(x, y, z)`, clipped to the volume.
    /// A window with no voxels inside the mask gives all zeros.
    pub fn features_at(&self, x: usize, y: usize, z: usize) -> [f64; LOCAL_FEATURE_COUNT] {
        let dims = self.vol.dims();
        let range = |c: usize, axis: usize| {
            let r = self.radius[axis];
            c.saturating_sub(r)..(c + r + 1).min(dims[axis])
        };
        let (xr, yr, zr) = (range(x, 0), range(y, 1), range(z, 2));
        let levels = self.quantized.levels;

        let mut hu = 0.0;
        let mut level_sum = 0.0;
        let mut n = 0usize;
        for zz in zr.clone() {
            for yy in yr.clone() {
                for xx in xr.clone() {
                    if let Some(l) = self.quantized.at(xx, yy, zz) {
                        hu += self.vol.get(xx, yy, zz);
                        level_sum += l as f64;
                        n += 1;
                    }
                }
            }
        }

        let mut out = [0.0; LOCAL_FEATURE_COUNT];
        if n == 0 {
            return out;
        }
        let mut counts = vec![0u64; levels * levels];
        let mut touched = Vec::new();
        for (o, offset) in OFFSETS.iter().enumerate() {
            for &k in &touched {
                counts[k] = 0;
            }
            touched.clear();
            self.quantized
                .accumulate(zr.clone(), xr.clone(), yr.clone(), *offset, |a, b| {
                    let k = a as usize * levels + b as usize;
                    if counts[k] == 0 {
                        touched.push(k);
                    }
                    counts[k] += 1;
                });
            touched.sort_unstable();
            let cells: Vec<(usize, usize, u64)> =
                touched.iter().map(|&k| (k / levels, k % levels, counts[k])).collect();
            let feats = haralick_sparse(&cells).unwrap_or_else(|_| haralick_constant(level_sum / n as f64));
            out[o * HARALICK_COUNT..(o + 1) * HARALICK_COUNT].copy_from_slice(&feats);
        }
        out[HU_ROW] = hu / n as f64;
        out
    }
}
