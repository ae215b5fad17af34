//! Exact Euclidean distance transform on anisotropic grids.
//!
//! Separable lower-envelope algorithm (Felzenszwalb & Huttenlocher) run
//! once per axis. Besides the squared distance, each voxel keeps the index
//! of its nearest feature voxel, so final distances are re-evaluated from
//! integer offsets with [`squared_distance_between`].

use super::{Geometry, Mask3D};

const NONE: usize = usize::MAX;

/// Squared millimetre distance for integer voxel offsets.
///
/// Axes with identical spacing are summed in integer arithmetic first, so
/// lattice ties such as (3,4,0) and (5,0,0) evaluate to the same float.
pub fn squared_distance_between(offset: [u64; 3], spacing: [f64; 3]) -> f64 {
    let [a, b, c] = offset;
    let [s0, s1, s2] = spacing;
    let sq = |s: f64| s * s;
    if s0 == s1 && s1 == s2 {
        sq(s0) * (a + b + c) as f64
    } else if s0 == s1 {
        sq(s0) * (a + b) as f64 + sq(s2) * c as f64
    } else if s0 == s2 {
        sq(s0) * (a + c) as f64 + sq(s1) * b as f64
    } else if s1 == s2 {
        sq(s0) * a as f64 + sq(s1) * (b + c) as f64
    } else {
        sq(s0) * a as f64 + sq(s1) * b as f64 + sq(s2) * c as f64
    }
}

/// Nearest foreground voxel for every voxel of the grid.
#[derive(Debug, Clone)]
pub struct FeatureTransform {
    geometry: Geometry,
    nearest: Vec<usize>,
}

impl FeatureTransform {
    pub fn nearest(&self, idx: usize) -> usize {
        self.nearest[idx]
    }

    pub fn squared_distance(&self, idx: usize) -> f64 {
        offset_distance(&self.geometry, idx, self.nearest[idx])
    }

    pub fn distance(&self, idx: usize) -> f64 {
        self.squared_distance(idx).sqrt()
    }
}

#[inline]
fn offset_distance(g: &Geometry, a: usize, b: usize) -> f64 {
    let pa = g.coords(a);
    let pb = g.coords(b);
    let d = |i: usize| {
        let v = pa[i].abs_diff(pb[i]) as u64;
        v * v
    };
    squared_distance_between([d(0), d(1), d(2)], g.spacing)
}

/// Returns `None` when `features` is blank.
pub fn nearest_feature_transform(features: &Mask3D) -> Option<FeatureTransform> {
    if features.is_blank() {
        return None;
    }
    let g = *features.geometry();
    let mut nearest: Vec<usize> = features
        .data()
        .iter()
        .enumerate()
        .map(|(i, &b)| if b { i } else { NONE })
        .collect();

    let [nx, ny, nz] = g.dims;
    let mut line_f = Vec::new();
    let mut line_feat = Vec::new();
    let mut scratch = Scratch::default();
    for axis in 0..3 {
        let n = g.dims[axis];
        let w2 = g.spacing[axis] * g.spacing[axis];
        let (outer_a, outer_b) = match axis {
            0 => (ny, nz),
            1 => (nx, nz),
            _ => (nx, ny),
        };
        for b in 0..outer_b {
            for a in 0..outer_a {
                let idx_of = |t: usize| match axis {
                    0 => g.index(t, a, b),
                    1 => g.index(a, t, b),
                    _ => g.index(a, b, t),
                };
                line_f.clear();
                line_feat.clear();
                for t in 0..n {
                    let i = idx_of(t);
                    let f = nearest[i];
                    line_feat.push(f);
                    line_f.push(if f == NONE { f64::INFINITY } else { offset_distance(&g, i, f) });
                }
                if line_feat.iter().all(|&f| f == NONE) {
                    continue;
                }
                let out = scratch.envelope(&line_f, w2);
                for t in 0..n {
                    nearest[idx_of(t)] = line_feat[out[t]];
                }
            }
        }
    }
    Some(FeatureTransform { geometry: g, nearest })
}

/// Squared distance (mm²) from every voxel to the nearest foreground voxel;
/// `None` when `features` is blank.
pub fn squared_distance_transform(features: &Mask3D) -> Option<Vec<f64>> {
    let ft = nearest_feature_transform(features)?;
    Some((0..features.geometry().len()).map(|i| ft.squared_distance(i)).collect())
}

#[derive(Default)]
struct Scratch {
    v: Vec<usize>,
    z: Vec<f64>,
    out: Vec<usize>,
}

impl Scratch {
    /// Index of the minimizing parabola for each sample of the line.
    fn envelope(&mut self, f: &[f64], w2: f64) -> &[usize] {
        let n = f.len();
        self.v.clear();
        self.z.clear();
        self.out.clear();
        let key = |q: usize| f[q] + w2 * (q * q) as f64;
        for q in 0..n {
            if !f[q].is_finite() {
                continue;
            }
            if self.v.is_empty() {
                self.v.push(q);
                self.z.push(f64::NEG_INFINITY);
                continue;
            }
            loop {
                let r = *self.v.last().unwrap();
                let s = (key(q) - key(r)) / (2.0 * w2 * (q - r) as f64);
                // z[0] is -inf, so the stack never empties
                if s <= *self.z.last().unwrap() {
                    self.v.pop();
                    self.z.pop();
                } else {
                    self.v.push(q);
                    self.z.push(s);
                    break;
                }
            }
        }
        let mut k = 0;
        for p in 0..n {
            while k + 1 < self.v.len() && self.z[k + 1] < p as f64 {
                k += 1;
            }
            self.out.push(self.v[k]);
        }
        &self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(mask: &Mask3D) -> Vec<f64> {
        let g = mask.geometry();
        let feats: Vec<usize> = mask.foreground_indices().collect();
        (0..g.len())
            .map(|i| {
                feats
                    .iter()
                    .map(|&f| offset_distance(g, i, f))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spacings = [[1.0, 1.0, 1.0], [0.5, 0.75, 2.5], [0.7, 0.9, 1.3], [0.625, 0.625, 3.0]];
        for trial in 0..60 {
            let dims = [rng.random_range(1..10), rng.random_range(1..10), rng.random_range(1..10)];
            let g = Geometry::new(dims, spacings[trial % 4], [0.0; 3]).unwrap();
            let density = rng.random_range(0.01..0.4);
            let m = Mask3D::from_fn(g, |_, _, _| rng.random_bool(density));
            match squared_distance_transform(&m) {
                None => assert!(m.is_blank()),
                Some(d) => assert_eq!(d, brute(&m), "trial {trial}"),
            }
        }
    }

    #[test]
    fn single_feature_gives_anisotropic_distance() {
        let g = Geometry::new([5, 5, 5], [0.5, 1.0, 2.0], [0.0; 3]).unwrap();
        let m = Mask3D::from_fn(g, |x, y, z| (x, y, z) == (2, 2, 2));
        let d = squared_distance_transform(&m).unwrap();
        assert_eq!(d[g.index(0, 2, 2)], 1.0);
        assert_eq!(d[g.index(2, 0, 2)], 4.0);
        assert_eq!(d[g.index(2, 2, 0)], 16.0);
        assert_eq!(d[g.index(4, 4, 4)], 1.0 + 4.0 + 16.0);
    }

    #[test]
    fn blank_mask_has_no_transform() {
        let g = Geometry::unit([3, 3, 3]).unwrap();
        assert!(nearest_feature_transform(&Mask3D::empty(g)).is_none());
    }

    #[test]
    fn lattice_ties_evaluate_identically() {
        let s = [0.7, 0.7, 0.7];
        assert_eq!(squared_distance_between([9, 16, 0], s), squared_distance_between([25, 0, 0], s));
    }
}
