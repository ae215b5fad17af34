use std::collections::VecDeque;

use super::Mask3D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// Labels are 1-based and contiguous; 0 is background.
/// `sizes[l - 1]` is the voxel count of label `l`.
#[derive(Debug, Clone)]
pub struct Components {
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Label of the largest component; ties go to the lowest label.
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<(u32, usize)> = None;
        for (i, &s) in self.sizes.iter().enumerate() {
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((i as u32 + 1, s));
            }
        }
        best.map(|(l, _)| l)
    }

    pub fn mask_of(&self, template: &Mask3D, label: u32) -> Mask3D {
        let mut m = Mask3D::empty(*template.geometry());
        for (d, &l) in m.data_mut().iter_mut().zip(&self.labels) {
            *d = l == label;
        }
        m
    }
}

/// Breadth-first labeling in raster order of the first voxel of each component.
pub fn connected_components(mask: &Mask3D, connectivity: Connectivity) -> Components {
    let g = *mask.geometry();
    let [nx, ny, nz] = g.dims;
    let offsets = connectivity.offsets();
    let mut labels = vec![0u32; g.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..g.len() {
        if !mask.data()[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let [x, y, z] = g.coords(i);
            for o in &offsets {
                let (qx, qy, qz) = (x as isize + o[0], y as isize + o[1], z as isize + o[2]);
                if qx < 0 || qy < 0 || qz < 0 || qx >= nx as isize || qy >= ny as isize || qz >= nz as isize {
                    continue;
                }
                let j = g.index(qx as usize, qy as usize, qz as usize);
                if mask.data()[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    Components { labels, sizes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;
    use proptest::prelude::*;

    #[test]
    fn empty_mask_has_no_components() {
        let m = Mask3D::empty(Geometry::unit([5, 5, 5]).unwrap());
        let c = connected_components(&m, Connectivity::TwentySix);
        assert_eq!(c.count(), 0);
        assert!(c.largest().is_none());
    }

    #[test]
    fn two_disjoint_cubes() {
        let g = Geometry::unit([8, 8, 8]).unwrap();
        let m = Mask3D::from_fn(g, |x, y, z| {
            (x < 2 && y < 2 && z < 2) || ((5..7).contains(&x) && (5..7).contains(&y) && (5..7).contains(&z))
        });
        for conn in [Connectivity::Six, Connectivity::TwentySix] {
            let c = connected_components(&m, conn);
            assert_eq!(c.sizes, vec![8, 8]);
        }
    }

    #[test]
    fn single_corner_voxel() {
        let g = Geometry::unit([4, 4, 4]).unwrap();
        let m = Mask3D::from_fn(g, |x, y, z| x == 3 && y == 3 && z == 3);
        let c = connected_components(&m, Connectivity::Six);
        assert_eq!(c.sizes, vec![1]);
        assert_eq!(c.labels[g.index(3, 3, 3)], 1);
    }

    #[test]
    fn diagonal_neighbors_split_under_six() {
        let g = Geometry::unit([3, 3, 3]).unwrap();
        let m = Mask3D::from_fn(g, |x, y, z| x == y && y == z);
        assert_eq!(connected_components(&m, Connectivity::Six).count(), 3);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).count(), 1);
    }

    proptest! {
        #[test]
        fn labeling_is_a_partition(bits in proptest::collection::vec(any::<bool>(), 6 * 5 * 4)) {
            let g = Geometry::unit([6, 5, 4]).unwrap();
            let m = Mask3D::new(g, bits).unwrap();
            let c = connected_components(&m, Connectivity::TwentySix);
            prop_assert_eq!(c.sizes.iter().sum::<usize>(), m.count());
            for i in 0..g.len() {
                prop_assert_eq!(c.labels[i] != 0, m.data()[i]);
                if !m.data()[i] { continue; }
                let [x, y, z] = g.coords(i);
                for o in Connectivity::TwentySix.offsets() {
                    let q = [x as isize + o[0], y as isize + o[1], z as isize + o[2]];
                    if (0..3).any(|a| q[a] < 0 || q[a] >= g.dims[a] as isize) { continue; }
                    let j = g.index(q[0] as usize, q[1] as usize, q[2] as usize);
                    if m.data()[j] {
                        prop_assert_eq!(c.labels[i], c.labels[j]);
                    }
                }
            }
            let mut seen: Vec<u32> = c.labels.iter().copied().filter(|&l| l > 0).collect();
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen, (1..=c.count() as u32).collect::<Vec<_>>());
        }
    }
}
