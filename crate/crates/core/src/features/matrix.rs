//! The 42 × 160 region feature matrix.
//!
//! Row layout (fixed):
//!
//! - rows `9·o + f` for offset `o` in (0°, 45°, 90°, 135°) and Haralick feature `f`
//!   in the order of [`HARALICK_NAMES`](super::HARALICK_NAMES): 36 texture rows
//! - row 36: mean HU of the region voxels in the slab
//! - rows 37..42: volume, surface area, Euler number, major and minor axis
//!   length of the whole region, replicated across columns
//!
//! Columns are 160 axial slabs spanning the region's z-extent.

use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::glcm::{QuantizedVolume, OFFSETS};
use super::haralick::{haralick_constant, haralick_sparse, HARALICK_COUNT, HARALICK_NAMES};
use super::props::volume_properties;
use crate::error::{Error, Result};
use crate::matrix_io;
use crate::volume::{Mask3D, Volume3D};

pub const FEATURE_ROWS: usize = 42;
pub const FEATURE_COLUMNS: usize = 160;
pub const TEXTURE_ROWS: usize = 36;
pub const HU_ROW: usize = 36;
pub const VOLUME_ROWS: Range<usize> = 37..42;

/// Intensity handling for texture computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// HU display window applied before quantization.
    pub window_center: f64,
    pub window_width: f64,
    /// GLCM gray levels over the 8-bit range.
    pub levels: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window_center: 50.0,
            window_width: 350.0,
            levels: 32,
        }
    }
}

pub fn row_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_ROWS);
    for o in OFFSETS {
        for f in HARALICK_NAMES {
            names.push(format!("{f}_{}deg", o.degrees()));
        }
    }
    names.push("mean_hu".into());
    for n in ["volume", "surface_area", "euler_number", "major_axis_length", "minor_axis_length"] {
        names.push(n.into());
    }
    names
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    slabs: Vec<Range<usize>>,
}

impl FeatureMatrix {
    pub fn new(values: Vec<f64>, slabs: Vec<Range<usize>>) -> Result<Self> {
        if values.len() != FEATURE_ROWS * FEATURE_COLUMNS || slabs.len() != FEATURE_COLUMNS {
            return Err(Error::Shape(format!(
                "feature matrix needs {FEATURE_ROWS}x{FEATURE_COLUMNS} values and {FEATURE_COLUMNS} slabs"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("feature matrix has non-finite entries".into()));
        }
        Ok(FeatureMatrix { values, slabs })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * FEATURE_COLUMNS + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..FEATURE_ROWS).map(|r| self.get(r, col)).collect()
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * FEATURE_COLUMNS..(row + 1) * FEATURE_COLUMNS]
    }

    /// Axial slice range summarized by each column.
    pub fn slabs(&self) -> &[Range<usize>] {
        &self.slabs
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(FEATURE_ROWS, FEATURE_COLUMNS, &self.values)
    }
}

/// Partition of slices `z0..=z1` into `count` uniform slabs. When the extent
/// has fewer slices than `count`, each slab takes its nearest slice.
pub fn slab_ranges(z0: usize, z1: usize, count: usize) -> Vec<Range<usize>> {
    let m = z1 - z0 + 1;
    (0..count)
        .map(|k| {
            let start = k * m / count;
            let end = ((k + 1) * m / count).max(start + 1);
            z0 + start..z0 + end
        })
        .collect()
}

pub fn build_feature_matrix(vol: &Volume3D, mask: &Mask3D) -> Result<FeatureMatrix> {
    build_feature_matrix_with(vol, mask, &FeatureConfig::default())
}

pub fn build_feature_matrix_with(vol: &Volume3D, mask: &Mask3D, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    mask.check_same_geometry(vol.geometry())?;
    let bb = mask
        .bounding_box()
        .ok_or_else(|| Error::EmptyInput("feature matrix of an empty mask".into()))?;
    let props = volume_properties(mask)?.to_array();
    let q = QuantizedVolume::from_hu(vol, Some(mask), cfg.window_center, cfg.window_width, cfg.levels)?;
    let slabs = slab_ranges(bb.lo[2], bb.hi[2], FEATURE_COLUMNS);
    let xr = bb.lo[0]..bb.hi[0] + 1;
    let yr = bb.lo[1]..bb.hi[1] + 1;

    let columns: Vec<Option<[f64; HU_ROW + 1]>> = slabs
        .par_iter()
        .map(|slab| slab_column(vol, &q, slab.clone(), xr.clone(), yr.clone()))
        .collect();

    // slabs without region voxels borrow the nearest populated column
    let filled: Vec<[f64; HU_ROW + 1]> = (0..FEATURE_COLUMNS)
        .map(|c| {
            (0..FEATURE_COLUMNS)
                .flat_map(|d| [c.checked_sub(d), Some(c + d)])
                .flatten()
                .find_map(|k| columns.get(k).copied().flatten())
                .expect("the mask's first slab is populated")
        })
        .collect();

    let mut values = vec![0.0; FEATURE_ROWS * FEATURE_COLUMNS];
    for (c, col) in filled.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            values[r * FEATURE_COLUMNS + c] = v;
        }
        for (k, &p) in props.iter().enumerate() {
            values[(VOLUME_ROWS.start + k) * FEATURE_COLUMNS + c] = p;
        }
    }
    FeatureMatrix::new(values, slabs)
}

fn slab_column(
    vol: &Volume3D,
    q: &QuantizedVolume,
    slab: Range<usize>,
    xr: Range<usize>,
    yr: Range<usize>,
) -> Option<[f64; HU_ROW + 1]> {
    let mut hu_sum = 0.0;
    let mut level_sum = 0.0;
    let mut n = 0usize;
    for z in slab.clone() {
        for y in yr.clone() {
            for x in xr.clone() {
                if let Some(l) = q.at(x, y, z) {
                    hu_sum += vol.get(x, y, z);
                    level_sum += l as f64;
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        return None;
    }
    let mut out = [0.0; HU_ROW + 1];
    let levels = q.levels;
    let mut counts = vec![0u64; levels * levels];
    for (o, offset) in OFFSETS.iter().enumerate() {
        counts.iter_mut().for_each(|c| *c = 0);
        q.accumulate(slab.clone(), xr.clone(), yr.clone(), *offset, |a, b| {
            counts[a as usize * levels + b as usize] += 1;
        });
        let cells: Vec<(usize, usize, u64)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k / levels, k % levels, c))
            .collect();
        let feats = haralick_sparse(&cells).unwrap_or_else(|_| haralick_constant(level_sum / n as f64));
        out[o * HARALICK_COUNT..(o + 1) * HARALICK_COUNT].copy_from_slice(&feats);
    }
    out[HU_ROW] = hu_sum / n as f64;
    Some(out)
}

/// Writes `path` (binary) and its `.txt` sidecar naming the row order.
pub fn write_feature_matrix(fm: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut meta: Vec<(String, String)> = row_names()
        .into_iter()
        .enumerate()
        .map(|(i, n)| ("row".to_string(), format!("{i} {n}")))
        .collect();
    for (c, s) in fm.slabs.iter().enumerate() {
        meta.push(("slab".into(), format!("{c} {} {}", s.start, s.end)));
    }
    matrix_io::write_matrix(path.as_ref(), FEATURE_ROWS, FEATURE_COLUMNS, &fm.values, &meta)
}

pub fn read_feature_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let stored = matrix_io::read_matrix(path.as_ref())?;
    if stored.rows != FEATURE_ROWS || stored.cols != FEATURE_COLUMNS {
        return Err(Error::Shape(format!("stored matrix is {}x{}", stored.rows, stored.cols)));
    }
    let slabs = stored
        .meta
        .iter()
        .filter(|(k, _)| k == "slab")
        .map(|(_, v)| {
            let nums = matrix_io::parse_floats(v)?;
            match nums.as_slice() {
                [_, s, e] => Ok(*s as usize..*e as usize),
                _ => Err(Error::Format(format!("bad slab entry {v:?}"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::new(stored.data, slabs)
}
