//! Gray-level co-occurrence matrices over axial slabs.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::volume::{window_value, Geometry, Mask3D, Volume3D};

/// In-plane displacement at distance 1.
///
/// Angles are measured in index space with `y` increasing:
/// 0° = (+1, 0), 45° = (+1, +1), 90° = (0, +1), 135° = (-1, +1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Offset {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

pub const OFFSETS: [Offset; 4] = [Offset::Deg0, Offset::Deg45, Offset::Deg90, Offset::Deg135];

impl Offset {
    pub fn delta(self) -> (isize, isize) {
        match self {
            Offset::Deg0 => (1, 0),
            Offset::Deg45 => (1, 1),
            Offset::Deg90 => (0, 1),
            Offset::Deg135 => (-1, 1),
        }
    }

    pub fn degrees(self) -> u32 {
        match self {
            Offset::Deg0 => 0,
            Offset::Deg45 => 45,
            Offset::Deg90 => 90,
            Offset::Deg135 => 135,
        }
    }
}

/// Uniform binning of `[lo, hi)` into `levels` bins; values outside clamp to the end bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    pub levels: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Quantizer {
    pub fn new(levels: usize, lo: f64, hi: f64) -> Result<Self> {
        if levels < 2 || levels > u16::MAX as usize {
            return Err(Error::Parameter(format!("GLCM needs 2..=65535 levels, got {levels}")));
        }
        if !(hi > lo) {
            return Err(Error::Parameter(format!("empty quantization range [{lo}, {hi})")));
        }
        Ok(Quantizer { levels, lo, hi })
    }

    /// Bins over the 8-bit gray range `[0, 256)`.
    pub fn gray8(levels: usize) -> Result<Self> {
        Quantizer::new(levels, 0.0, 256.0)
    }

    /// Integer inputs `0..levels` map to themselves.
    pub fn identity(levels: usize) -> Result<Self> {
        Quantizer::new(levels, 0.0, levels as f64)
    }

    #[inline]
    pub fn level(&self, v: f64) -> u16 {
        // multiply before dividing so integer inputs to `identity` land exactly
        let t = ((v - self.lo) * self.levels as f64 / (self.hi - self.lo)).floor();
        t.clamp(0.0, (self.levels - 1) as f64) as u16
    }
}

/// Directed co-occurrence counts, row-major `counts[i * levels + j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlcmMatrix {
    pub levels: usize,
    pub offset: Offset,
    pub counts: Vec<u64>,
}

impl GlcmMatrix {
    pub fn new(levels: usize, offset: Offset) -> Self {
        GlcmMatrix {
            levels,
            offset,
            counts: vec![0; levels * levels],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.levels + j]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Nonzero cells as `(i, j, count)` in row-major order.
    pub fn nonzero(&self) -> Vec<(usize, usize, u64)> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k / self.levels, k % self.levels, c))
            .collect()
    }
}

/// Quantized gray levels of a volume; voxels outside the region hold `None`.
#[derive(Debug, Clone)]
pub struct QuantizedVolume {
    pub geometry: Geometry,
    pub levels: usize,
    pub data: Vec<Option<u16>>,
}

impl QuantizedVolume {
    pub fn new(vol: &Volume3D, mask: Option<&Mask3D>, q: &Quantizer) -> Result<Self> {
        if let Some(m) = mask {
            m.check_same_geometry(vol.geometry())?;
        }
        let data = vol
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| match mask {
                Some(m) if !m.data()[i] => None,
                _ => Some(q.level(v)),
            })
            .collect();
        Ok(QuantizedVolume {
            geometry: *vol.geometry(),
            levels: q.levels,
            data,
        })
    }

    /// HU volume through the display window, then binned over `[0, 256)`.
    pub fn from_hu(vol: &Volume3D, mask: Option<&Mask3D>, center: f64, width: f64, levels: usize) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Parameter(format!("window width must be positive, got {width}")));
        }
        let q = Quantizer::gray8(levels)?;
        let lo = center - width / 2.0;
        let gray = vol.map(|v| window_value(v, lo, width));
        QuantizedVolume::new(&gray, mask, &q)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> Option<u16> {
        self.data[self.geometry.index(x, y, z)]
    }

    /// Accumulates pairs `(p, p + offset)` with both ends inside the region,
    /// restricted to slices `slices` and the in-plane window `[x0, x1) × [y0, y1)`.
    pub(crate) fn accumulate(
        &self,
        slices: Range<usize>,
        xr: Range<usize>,
        yr: Range<usize>,
        offset: Offset,
        mut visit: impl FnMut(u16, u16),
    ) {
        let (dx, dy) = offset.delta();
        for z in slices {
            for y in yr.clone() {
                let qy = y as isize + dy;
                if qy < yr.start as isize || qy >= yr.end as isize {
                    continue;
                }
                for x in xr.clone() {
                    let qx = x as isize + dx;
                    if qx < xr.start as isize || qx >= xr.end as isize {
                        continue;
                    }
                    if let (Some(a), Some(b)) = (self.at(x, y, z), self.at(qx as usize, qy as usize, z)) {
                        visit(a, b);
                    }
                }
            }
        }
    }

    pub fn glcm(&self, slices: Range<usize>, offset: Offset) -> Result<GlcmMatrix> {
        let [nx, ny, nz] = self.geometry.dims;
        if slices.start >= slices.end || slices.end > nz {
            return Err(Error::Parameter(format!("slab {slices:?} outside 0..{nz}")));
        }
        let occupied = slices
            .clone()
            .any(|z| (0..ny).any(|y| (0..nx).any(|x| self.at(x, y, z).is_some())));
        if !occupied {
            return Err(Error::EmptyInput(format!("no region voxels in slab {slices:?}")));
        }
        let mut g = GlcmMatrix::new(self.levels, offset);
        let l = self.levels;
        self.accumulate(slices, 0..nx, 0..ny, offset, |a, b| {
            g.counts[a as usize * l + b as usize] += 1;
        });
        Ok(g)
    }
}

/// Co-occurrence counts of in-mask voxel pairs within the axial slab `slices`.
pub fn glcm(
    vol: &Volume3D,
    mask: &Mask3D,
    slices: Range<usize>,
    offset: Offset,
    quantizer: &Quantizer,
) -> Result<GlcmMatrix> {
    QuantizedVolume::new(vol, Some(mask), quantizer)?.glcm(slices, offset)
}
