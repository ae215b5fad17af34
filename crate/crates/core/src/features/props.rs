//! Whole-region shape descriptors.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::volume::Mask3D;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeProperties {
    /// mm³
    pub volume: f64,
    /// mm², exposed voxel faces
    pub surface_area: f64,
    pub euler_number: i64,
    /// mm, `4·sqrt(λ_max)` of the coordinate covariance
    pub major_axis: f64,
    /// mm, `4·sqrt(λ_min)`
    pub minor_axis: f64,
}

impl VolumeProperties {
    pub fn to_array(self) -> [f64; 5] {
        [
            self.volume,
            self.surface_area,
            self.euler_number as f64,
            self.major_axis,
            self.minor_axis,
        ]
    }
}

pub fn volume_properties(mask: &Mask3D) -> Result<VolumeProperties> {
    let g = *mask.geometry();
    let [sx, sy, sz] = g.spacing;
    let [nx, ny, nz] = g.dims;
    let count = mask.count();
    if count == 0 {
        return Err(Error::EmptyInput("volume properties of an empty mask".into()));
    }

    // exposed faces per axis
    let mut faces = [0usize; 3];
    let mut sum = [0.0f64; 3];
    let mut sum2 = [[0.0f64; 3]; 3];
    for i in mask.foreground_indices() {
        let [x, y, z] = g.coords(i);
        let at = |x: usize, y: usize, z: usize| mask.get(x, y, z);
        faces[0] += (x == 0 || !at(x - 1, y, z)) as usize + (x + 1 == nx || !at(x + 1, y, z)) as usize;
        faces[1] += (y == 0 || !at(x, y - 1, z)) as usize + (y + 1 == ny || !at(x, y + 1, z)) as usize;
        faces[2] += (z == 0 || !at(x, y, z - 1)) as usize + (z + 1 == nz || !at(x, y, z + 1)) as usize;
        let p = [x as f64 * sx, y as f64 * sy, z as f64 * sz];
        for a in 0..3 {
            sum[a] += p[a];
            for b in 0..3 {
                sum2[a][b] += p[a] * p[b];
            }
        }
    }
    let n = count as f64;
    let cov = Matrix3::from_fn(|a, b| sum2[a][b] / n - (sum[a] / n) * (sum[b] / n));
    let eig = SymmetricEigen::new(cov).eigenvalues;
    let lmax = eig.max().max(0.0);
    let lmin = eig.min().max(0.0);

    Ok(VolumeProperties {
        volume: n * g.voxel_volume(),
        surface_area: faces[0] as f64 * sy * sz + faces[1] as f64 * sx * sz + faces[2] as f64 * sx * sy,
        euler_number: euler_number(mask),
        major_axis: 4.0 * lmax.sqrt(),
        minor_axis: 4.0 * lmin.sqrt(),
    })
}

/// Euler characteristic `V - E + F - C` of the union of closed foreground voxels.
pub fn euler_number(mask: &Mask3D) -> i64 {
    let Some(bb) = mask.bounding_box() else {
        return 0;
    };
    let fg = |x: isize, y: isize, z: isize| -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < mask.dims()[0]
            && (y as usize) < mask.dims()[1]
            && (z as usize) < mask.dims()[2]
            && mask.get(x as usize, y as usize, z as usize)
    };
    let [x0, y0, z0] = bb.lo.map(|v| v as isize);
    let [x1, y1, z1] = bb.hi.map(|v| v as isize + 1);

    let mut chi: i64 = 0;
    // lattice point (i, j, k) is the corner shared by voxels (i-a, j-b, k-c), a, b, c ∈ {0, 1}
    for k in z0..=z1 {
        for j in y0..=y1 {
            for i in x0..=x1 {
                let v = |a, b, c| fg(i - a, j - b, k - c);
                // vertex
                if (0..8).any(|m| v(m & 1, (m >> 1) & 1, (m >> 2) & 1)) {
                    chi += 1;
                }
                // edges starting at this lattice point along +x, +y, +z
                if (0..4).any(|m| fg(i, j - (m & 1), k - ((m >> 1) & 1))) {
                    chi -= 1;
                }
                if (0..4).any(|m| fg(i - (m & 1), j, k - ((m >> 1) & 1))) {
                    chi -= 1;
                }
                if (0..4).any(|m| fg(i - (m & 1), j - ((m >> 1) & 1), k)) {
                    chi -= 1;
                }
                // faces with lower corner at this lattice point, normal to x, y, z
                if fg(i, j, k) || fg(i - 1, j, k) {
                    chi += 1;
                }
                if fg(i, j, k) || fg(i, j - 1, k) {
                    chi += 1;
                }
                if fg(i, j, k) || fg(i, j, k - 1) {
                    chi += 1;
                }
                if fg(i, j, k) {
                    chi -= 1;
                }
            }
        }
    }
    chi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    /// Counts distinct cells of every dimension via explicit enumeration of
    /// each voxel's closed cube, in doubled coordinates.
    fn euler_oracle(m: &Mask3D) -> i64 {
        let mut cells: [HashSet<[i64; 3]>; 4] = Default::default();
        for i in m.foreground_indices() {
            let [x, y, z] = m.geometry().coords(i).map(|v| 2 * v as i64);
            for dz in 0..=2 {
                for dy in 0..=2 {
                    for dx in 0..=2 {
                        let dim = (dx == 1) as usize + (dy == 1) as usize + (dz == 1) as usize;
                        cells[dim].insert([x + dx, y + dy, z + dz]);
                    }
                }
            }
        }
        cells[0].len() as i64 - cells[1].len() as i64 + cells[2].len() as i64 - cells[3].len() as i64
    }

    #[test]
    fn unit_voxel() {
        let g = Geometry::unit([3, 3, 3]).unwrap();
        let m = Mask3D::from_fn(g, |x, y, z| (x, y, z) == (1, 1, 1));
        let p = volume_properties(&m).unwrap();
        assert_eq!(p.volume, 1.0);
        assert_eq!(p.surface_area, 6.0);
        assert_eq!(p.euler_number, 1);
        assert_eq!(p.major_axis, 0.0);
    }

    #[test]
    fn hollow_cube_has_euler_two() {
        let g = Geometry::unit([3, 3, 3]).unwrap();
        let m = Mask3D::from_fn(g, |x, y, z| (x, y, z) != (1, 1, 1));
        assert_eq!(euler_oracle(&m), 2);
        assert_eq!(euler_number(&m), 2);
    }

    #[test]
    fn solid_two_cube() {
        let g = Geometry::unit([4, 4, 4]).unwrap();
        let m = Mask3D::from_fn(g, |x, y, z| x < 2 && y < 2 && z < 2);
        let p = volume_properties(&m).unwrap();
        assert_eq!((p.volume, p.surface_area, p.euler_number), (8.0, 24.0, 1));
    }

    #[test]
    fn torus_has_euler_zero() {
        let g = Geometry::unit([3, 3, 1]).unwrap();
        let m = Mask3D::from_fn(g, |x, y, _| (x, y) != (1, 1));
        assert_eq!(euler_number(&m), 0);
    }

    #[test]
    fn euler_matches_enumeration_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let g = Geometry::unit([rng.random_range(1..7), rng.random_range(1..7), rng.random_range(1..7)]).unwrap();
            let m = Mask3D::from_fn(g, |_, _, _| rng.random_bool(0.45));
            assert_eq!(euler_number(&m), euler_oracle(&m));
        }
    }

    #[test]
    fn scaling_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dims = [6, 5, 7];
        let bits: Vec<bool> = (0..210).map(|_| rng.random_bool(0.5)).collect();
        let a = Mask3D::new(Geometry::unit(dims).unwrap(), bits.clone()).unwrap();
        let s = 1.7;
        let b = Mask3D::new(Geometry::new(dims, [s; 3], [0.0; 3]).unwrap(), bits).unwrap();
        let (pa, pb) = (volume_properties(&a).unwrap(), volume_properties(&b).unwrap());
        assert!((pb.volume - pa.volume * s.powi(3)).abs() < 1e-9);
        assert!((pb.surface_area - pa.surface_area * s * s).abs() < 1e-9);
        assert_eq!(pa.euler_number, pb.euler_number);
        assert!((pb.major_axis - pa.major_axis * s).abs() < 1e-9);
    }

    #[test]
    fn axis_lengths_of_a_rod() {
        let g = Geometry::new([10, 1, 1], [2.0, 1.0, 1.0], [0.0; 3]).unwrap();
        let m = Mask3D::from_fn(g, |_, _, _| true);
        let p = volume_properties(&m).unwrap();
        // variance of 0,2,..,18 is 33
        assert!((p.major_axis - 4.0 * 33f64.sqrt()).abs() < 1e-9);
        assert!(p.minor_axis.abs() < 1e-6);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let m = Mask3D::empty(Geometry::unit([2, 2, 2]).unwrap());
        assert!(matches!(volume_properties(&m), Err(Error::EmptyInput(_))));
    }
}
