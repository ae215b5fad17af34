//! The nine Haralick statistics used as texture features.
//!
//! With `p(i, j) = counts / total`, marginal means `μx = Σ i·p`, `μy = Σ j·p`
//! and deviations `σx² = Σ (i-μx)²·p`, `σy² = Σ (j-μy)²·p`:
//!
//! | # | feature | formula |
//! |---|---------|---------|
//! | 0 | entropy | `-Σ p·ln p` |
//! | 1 | energy | `Σ p²` |
//! | 2 | contrast | `Σ (i-j)²·p` |
//! | 3 | homogeneity | `Σ p / (1 + abs(i-j))` |
//! | 4 | sum mean | `μx` |
//! | 5 | correlation | `Σ (i-μx)(j-μy)·p / (σx·σy)`, 1 when `σx·σy = 0` |
//! | 6 | maximum probability | `max p` |
//! | 7 | inverse difference moment | `Σ p / (1 + (i-j)²)` |
//! | 8 | cluster tendency | `Σ (i + j - μx - μy)²·p` |

use super::glcm::GlcmMatrix;
use crate::error::{Error, Result};

pub const HARALICK_COUNT: usize = 9;

pub const HARALICK_NAMES: [&str; HARALICK_COUNT] = [
    "entropy",
    "energy",
    "contrast",
    "homogeneity",
    "sum_mean",
    "correlation",
    "max_probability",
    "inverse_difference_moment",
    "cluster_tendency",
];

pub fn haralick(g: &GlcmMatrix) -> Result<[f64; HARALICK_COUNT]> {
    haralick_sparse(&g.nonzero())
}

/// Haralick features from the nonzero cells `(i, j, count)` of a GLCM.
pub fn haralick_sparse(cells: &[(usize, usize, u64)]) -> Result<[f64; HARALICK_COUNT]> {
    let total: u64 = cells.iter().map(|c| c.2).sum();
    if total == 0 {
        return Err(Error::EmptyInput("co-occurrence matrix has no pairs".into()));
    }
    let n = total as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for &(i, j, c) in cells {
        let p = c as f64 / n;
        mx += i as f64 * p;
        my += j as f64 * p;
    }
    let mut f = [0.0; HARALICK_COUNT];
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for &(i, j, c) in cells {
        if c == 0 {
            continue;
        }
        let p = c as f64 / n;
        let (fi, fj) = (i as f64, j as f64);
        let d = fi - fj;
        f[0] -= p * p.ln();
        f[1] += p * p;
        f[2] += d * d * p;
        f[3] += p / (1.0 + d.abs());
        f[6] = f64::max(f[6], p);
        f[7] += p / (1.0 + d * d);
        let s = fi + fj - mx - my;
        f[8] += s * s * p;
        vx += (fi - mx) * (fi - mx) * p;
        vy += (fj - my) * (fj - my) * p;
        cov += (fi - mx) * (fj - my) * p;
    }
    f[4] = mx;
    let sd = (vx * vy).sqrt();
    f[5] = if sd > 0.0 { cov / sd } else { 1.0 };
    Ok(f)
}

/// Features of a single-cell distribution at `(level, level)`.
pub fn haralick_constant(level: f64) -> [f64; HARALICK_COUNT] {
    [0.0, 1.0, 0.0, 1.0, level, 1.0, 1.0, 1.0, 0.0]
}
