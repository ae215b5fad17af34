//! Volumetric containers shared by every stage of the pipeline.
//!
//! Voxels are stored x-fastest: the scalar at `(x, y, z)` lives at
//! `x + nx * (y + ny * z)`, the same order MetaImage uses on disk.

mod components;
mod distance;
mod metaimage;

pub use components::{connected_components, Components, Connectivity};
pub use distance::{nearest_feature_transform, squared_distance_between, squared_distance_transform, FeatureTransform};
pub use metaimage::{load_metaimage, save_metaimage, save_metaimage_as, ElementType};

use crate::error::{Error, Result};

/// Grid geometry: voxel counts, millimetre spacing and origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Parameter(format!("dimensions must be positive, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Parameter(format!(
                "spacing must be finite and strictly positive, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Parameter(format!("origin must be finite, got {origin:?}")));
        }
        Ok(Geometry {
            dims,
            spacing,
            origin,
        })
    }

    /// Unit spacing, zero origin.
    pub fn unit(dims: [usize; 3]) -> Result<Self> {
        Geometry::new(dims, [1.0; 3], [0.0; 3])
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Scalar volume (HU, gray level or a level-set field).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    geometry: Geometry,
    data: Vec<f64>,
}

impl Volume3D {
    pub fn new(geometry: Geometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::Shape(format!(
                "volume of dims {:?} needs {} scalars, got {}",
                geometry.dims,
                geometry.len(),
                data.len()
            )));
        }
        Ok(Volume3D { geometry, data })
    }

    pub fn filled(geometry: Geometry, value: f64) -> Self {
        Volume3D {
            data: vec![value; geometry.len()],
            geometry,
        }
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let [nx, ny, nz] = geometry.dims;
        let mut data = Vec::with_capacity(geometry.len());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Volume3D { geometry, data }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.geometry.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        let i = self.geometry.index(x, y, z);
        self.data[i] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Volume3D {
        Volume3D {
            geometry: self.geometry,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Mask of voxels satisfying `pred`.
    pub fn threshold(&self, pred: impl Fn(f64) -> bool) -> Mask3D {
        Mask3D {
            geometry: self.geometry,
            data: self.data.iter().map(|&v| pred(v)).collect(),
        }
    }
}

/// Binary label volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask3D {
    geometry: Geometry,
    data: Vec<bool>,
}

impl Mask3D {
    pub fn new(geometry: Geometry, data: Vec<bool>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::Shape(format!(
                "mask of dims {:?} needs {} voxels, got {}",
                geometry.dims,
                geometry.len(),
                data.len()
            )));
        }
        Ok(Mask3D { geometry, data })
    }

    pub fn empty(geometry: Geometry) -> Self {
        Mask3D {
            data: vec![false; geometry.len()],
            geometry,
        }
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let [nx, ny, nz] = geometry.dims;
        let mut data = Vec::with_capacity(geometry.len());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Mask3D { geometry, data }
    }

    /// Foreground where the volume is nonzero.
    pub fn from_volume(vol: &Volume3D) -> Self {
        vol.threshold(|v| v != 0.0)
    }

    pub fn to_volume(&self) -> Volume3D {
        Volume3D {
            geometry: self.geometry,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.geometry.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.geometry.index(x, y, z);
        self.data[i] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_blank(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn check_same_geometry(&self, other: &Geometry) -> Result<()> {
        if self.geometry.dims != other.dims || self.geometry.spacing != other.spacing {
            return Err(Error::Shape(format!(
                "geometry mismatch: dims {:?}/{:?}, spacing {:?}/{:?}",
                self.geometry.dims, other.dims, self.geometry.spacing, other.spacing
            )));
        }
        Ok(())
    }

    pub fn and(&self, other: &Mask3D) -> Mask3D {
        Mask3D {
            geometry: self.geometry,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect(),
        }
    }

    pub fn and_not(&self, other: &Mask3D) -> Mask3D {
        Mask3D {
            geometry: self.geometry,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a && !b).collect(),
        }
    }

    pub fn foreground_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// Inclusive bounding box of the foreground, `None` when blank.
    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for i in self.foreground_indices() {
            let c = self.geometry.coords(i);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
            any = true;
        }
        any.then_some(BoundingBox { lo, hi })
    }

    /// Arithmetic mean of foreground voxel coordinates.
    pub fn centroid(&self) -> Result<[f64; 3]> {
        let mut sum = [0.0f64; 3];
        let mut n = 0usize;
        for i in self.foreground_indices() {
            let c = self.geometry.coords(i);
            for a in 0..3 {
                sum[a] += c[a] as f64;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyInput("centroid of an empty mask".into()));
        }
        Ok(sum.map(|s| s / n as f64))
    }
}

/// Inclusive voxel-index box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl BoundingBox {
    pub fn extent(&self, axis: usize) -> usize {
        self.hi[axis] - self.lo[axis] + 1
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }
}

/// Free-function form of [`Mask3D::centroid`].
pub fn centroid(mask: &Mask3D) -> Result<[f64; 3]> {
    mask.centroid()
}

/// Linear display window onto `[0, 255]`, clamped, rounded half-up.
pub fn window_to_8bit(vol: &Volume3D, center: f64, width: f64) -> Result<Volume3D> {
    if !(width > 0.0) {
        return Err(Error::Parameter(format!("window width must be positive, got {width}")));
    }
    let lo = center - width / 2.0;
    Ok(vol.map(|v| window_value(v, lo, width)))
}

#[inline]
pub(crate) fn window_value(v: f64, lo: f64, width: f64) -> f64 {
    let g = ((v - lo) / width * 255.0).clamp(0.0, 255.0);
    (g + 0.5).floor().min(255.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(n: usize) -> Geometry {
        Geometry::unit([n, n, n]).unwrap()
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(Geometry::new([0, 1, 1], [1.0; 3], [0.0; 3]).is_err());
        assert!(Geometry::new([1, 1, 1], [1.0, 0.0, 1.0], [0.0; 3]).is_err());
        assert!(Volume3D::new(geom(2), vec![0.0; 7]).is_err());
    }

    #[test]
    fn indexing_is_x_fastest() {
        let g = Geometry::unit([3, 4, 5]).unwrap();
        assert_eq!(g.index(1, 0, 0), 1);
        assert_eq!(g.index(0, 1, 0), 3);
        assert_eq!(g.index(0, 0, 1), 12);
        assert_eq!(g.coords(g.index(2, 3, 4)), [2, 3, 4]);
    }

    #[test]
    fn window_midpoint_and_clamps() {
        let v = Volume3D::new(Geometry::unit([4, 1, 1]).unwrap(), vec![50.0, -500.0, 500.0, 225.0])
            .unwrap();
        let w = window_to_8bit(&v, 50.0, 350.0).unwrap();
        // 127.5 rounds half-up
        assert_eq!(w.data()[0], 128.0);
        assert_eq!(w.data()[1], 0.0);
        assert_eq!(w.data()[2], 255.0);
        assert_eq!(w.data()[3], 255.0);
        assert!(window_to_8bit(&v, 0.0, 0.0).is_err());
    }

    #[test]
    fn default_window_places_liver_band_near_gray_band() {
        // (v - lo)/w*255 solved for 40 and 60 HU at center 50, width 350
        let lo: f64 = 50.0 - 175.0;
        let g40 = (40.0 - lo) / 350.0 * 255.0;
        let g60 = (60.0 - lo) / 350.0 * 255.0;
        assert!((g40 - 120.214).abs() < 1e-3);
        assert!((g60 - 134.786).abs() < 1e-3);
        let v = Volume3D::new(Geometry::unit([2, 1, 1]).unwrap(), vec![40.0, 60.0]).unwrap();
        let w = window_to_8bit(&v, 50.0, 350.0).unwrap();
        assert_eq!(w.data(), &[120.0, 135.0]);
        // the window that maps 40..60 HU exactly onto 125..155 gray: slope 1.5 gray/HU
        let width: f64 = 255.0 / 1.5;
        let center = 50.0 - (140.0 / 255.0 * width - width / 2.0);
        assert!((width - 170.0).abs() < 1e-12);
        assert!((center - 41.6667).abs() < 1e-3);
        let v = Volume3D::new(Geometry::unit([2, 1, 1]).unwrap(), vec![40.0, 60.0]).unwrap();
        let w = window_to_8bit(&v, center, width).unwrap();
        assert_eq!(w.data(), &[125.0, 155.0]);
    }

    #[test]
    fn centroid_examples() {
        let g = geom(10);
        let mut m = Mask3D::empty(g);
        m.set(5, 6, 7, true);
        assert_eq!(m.centroid().unwrap(), [5.0, 6.0, 7.0]);

        let mut m = Mask3D::empty(g);
        m.set(0, 0, 0, true);
        m.set(2, 0, 0, true);
        assert_eq!(m.centroid().unwrap(), [1.0, 0.0, 0.0]);

        let m = Mask3D::from_fn(g, |x, y, z| (4..8).contains(&x) && (4..8).contains(&y) && (4..8).contains(&z));
        assert_eq!(m.centroid().unwrap(), [5.5, 5.5, 5.5]);

        assert!(matches!(Mask3D::empty(g).centroid(), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn bounding_box_of_blob() {
        let g = geom(8);
        let m = Mask3D::from_fn(g, |x, y, z| x == 2 && (1..4).contains(&y) && z >= 6);
        let bb = m.bounding_box().unwrap();
        assert_eq!(bb.lo, [2, 1, 6]);
        assert_eq!(bb.hi, [2, 3, 7]);
        assert_eq!(bb.extent(1), 3);
        assert!(Mask3D::empty(g).bounding_box().is_none());
    }
}
