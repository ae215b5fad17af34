//! Synthetic abdominal phantoms with known ground truth: an air background,
//! a textured body and a textured liver ellipsoid on the low-x half.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::volume::{Geometry, Mask3D, Volume3D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Standard deviation of additive Gaussian noise in HU.
    pub noise: f64,
    /// Drives shape jitter and noise.
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [64, 64, 64],
            spacing: [1.0, 1.0, 1.0],
            noise: 1.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub volume: Volume3D,
    pub liver: Mask3D,
    pub body: Mask3D,
}

pub const AIR_HU: f64 = -1000.0;

/// Liver intensities: 50 HU with a ±5 HU checkerboard, clipped to `[41, 59]`
/// after noise so the whole organ stays in the liver band.
fn liver_hu(x: usize, y: usize, z: usize) -> f64 {
    50.0 + if (x + y + z) % 2 == 0 { 5.0 } else { -5.0 }
}

/// Soft-tissue background: 150 HU with ±40 HU stripes of period 4 along y.
fn body_hu(_x: usize, y: usize, _z: usize) -> f64 {
    150.0 + if y % 4 < 2 { 40.0 } else { -40.0 }
}

fn ellipsoid(c: [f64; 3], r: [f64; 3]) -> impl Fn(usize, usize, usize) -> bool {
    move |x, y, z| {
        let p = [x as f64, y as f64, z as f64];
        (0..3).map(|a| ((p[a] - c[a]) / r[a]).powi(2)).sum::<f64>() <= 1.0
    }
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    let g = Geometry::new(spec.dims, spec.spacing, [0.0; 3])?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.dims.map(|d| d as f64);
    let mut jitter = |f: f64| 1.0 + rng.random_range(-f..=f);

    let body_c = n.map(|d| (d - 1.0) / 2.0);
    let body_r = n.map(|d| 0.45 * d);
    let body = Mask3D::from_fn(g, ellipsoid(body_c, body_r));

    let liver_c = [0.33 * n[0] * jitter(0.05), body_c[1] * jitter(0.05), body_c[2] * jitter(0.05)];
    let liver_r = [0.19 * n[0] * jitter(0.1), 0.27 * n[1] * jitter(0.1), 0.25 * n[2] * jitter(0.1)];
    let liver = Mask3D::from_fn(g, ellipsoid(liver_c, liver_r)).and(&body);

    let noise = Normal::new(0.0, spec.noise.max(0.0)).expect("finite noise level");
    let mut vol = Volume3D::filled(g, AIR_HU);
    for z in 0..spec.dims[2] {
        for y in 0..spec.dims[1] {
            for x in 0..spec.dims[0] {
                let e = noise.sample(&mut rng);
                let v = if liver.get(x, y, z) {
                    (liver_hu(x, y, z) + e).clamp(41.0, 59.0)
                } else if body.get(x, y, z) {
                    body_hu(x, y, z) + e
                } else {
                    AIR_HU + e
                };
                vol.set(x, y, z, v);
            }
        }
    }
    Ok(Phantom { volume: vol, liver, body })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::{localize, threshold_liver, IntensityMode, LocalizationOptions};

    #[test]
    fn liver_sits_in_band_on_the_right_half() {
        let p = generate_phantom(&PhantomSpec::default()).unwrap();
        assert!(p.liver.count() > 5000);
        let (lo, hi) = IntensityMode::Hu.liver_band();
        for i in p.liver.foreground_indices() {
            let v = p.volume.data()[i];
            assert!((lo..=hi).contains(&v));
        }
        let c = p.liver.centroid().unwrap();
        assert!(c[0] < 32.0);
        let band = threshold_liver(&p.volume, IntensityMode::Hu);
        assert!(band.and_not(&p.liver).count() < p.liver.count() / 20);
        let seed = localize(&p.volume, &LocalizationOptions::default()).unwrap();
        assert!(p.liver.get(seed.center[0], seed.center[1], seed.center[2]));
    }

    #[test]
    fn seeded_and_varied() {
        let a = generate_phantom(&PhantomSpec::default()).unwrap();
        let b = generate_phantom(&PhantomSpec::default()).unwrap();
        assert_eq!(a.volume, b.volume);
        let c = generate_phantom(&PhantomSpec { seed: 7, ..Default::default() }).unwrap();
        assert_ne!(a.liver, c.liver);
    }
}
