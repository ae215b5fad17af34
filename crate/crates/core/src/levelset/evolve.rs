use rayon::prelude::*;

use super::data::DataTermField;
use super::heaviside::{dirac, heaviside, inside};
use crate::error::{Error, Result};
use crate::volume::{nearest_feature_transform, Geometry, Mask3D, Volume3D};

/// Level-set field (positive inside) plus its evolution parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetState {
    pub phi: Volume3D,
    pub iteration: usize,
    /// Energy after every [`evolve_step`].
    pub energy_trace: Vec<f64>,
    /// Heaviside width in voxels (multiplied by the smallest spacing).
    pub epsilon: f64,
    pub lambda: f64,
}

impl LevelSetState {
    pub fn new(phi: Volume3D, epsilon: f64, lambda: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Parameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Parameter(format!("lambda must be non-negative, got {lambda}")));
        }
        if phi.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("level-set field is not finite".into()));
        }
        Ok(LevelSetState {
            phi,
            iteration: 0,
            energy_trace: Vec::new(),
            epsilon,
            lambda,
        })
    }

    /// Signed distance to the boundary of `mask`.
    pub fn from_mask(mask: &Mask3D, epsilon: f64, lambda: f64) -> Result<Self> {
        LevelSetState::new(signed_distance(mask)?, epsilon, lambda)
    }

    /// Heaviside width in millimetres.
    pub fn epsilon_mm(&self) -> f64 {
        self.epsilon * self.phi.geometry().min_spacing()
    }

    pub fn interior(&self) -> Mask3D {
        interior(&self.phi)
    }
}

pub fn interior(phi: &Volume3D) -> Mask3D {
    phi.threshold(inside)
}

/// Largest step keeping the curvature term explicit-stable: `0.5·h²/λ`.
pub fn max_stable_dt(spacing: [f64; 3], lambda: f64) -> f64 {
    let h = spacing.iter().copied().fold(f64::INFINITY, f64::min);
    if lambda > 0.0 {
        0.5 * h * h / lambda
    } else {
        f64::INFINITY
    }
}

/// `0.4·h²/max(λ, 1)`; the data force is bounded by 1.
pub fn default_dt(spacing: [f64; 3], lambda: f64) -> f64 {
    let h = spacing.iter().copied().fold(f64::INFINITY, f64::min);
    0.4 * h * h / lambda.max(1.0)
}

/// Signed distance, positive inside, with the zero crossing half a voxel
/// outside the foreground: inside voxels get `d(outside) − h/2`, outside
/// voxels `−(d(inside) − h/2)`, `h` the smallest spacing.
pub fn signed_distance(mask: &Mask3D) -> Result<Volume3D> {
    if mask.is_blank() {
        return Err(Error::Degenerate("level set has an empty interior".into()));
    }
    let outside = Mask3D::from_fn(*mask.geometry(), |x, y, z| !mask.get(x, y, z));
    if outside.is_blank() {
        return Err(Error::Degenerate("level set interior fills the volume".into()));
    }
    let half = 0.5 * mask.geometry().min_spacing();
    let (to_in, to_out) = rayon::join(|| nearest_feature_transform(mask), || nearest_feature_transform(&outside));
    let (to_in, to_out) = (to_in.expect("nonempty"), to_out.expect("nonempty"));
    let data = (0..mask.geometry().len())
        .into_par_iter()
        .map(|i| {
            if mask.data()[i] {
                to_out.distance(i) - half
            } else {
                -(to_in.distance(i) - half)
            }
        })
        .collect();
    Volume3D::new(*mask.geometry(), data)
}

/// Replaces `phi` by the signed distance to its own zero level set.
pub fn reinitialize(state: &LevelSetState) -> Result<LevelSetState> {
    let mut next = state.clone();
    next.phi = signed_distance(&state.interior())?;
    Ok(next)
}

#[derive(Clone, Copy)]
pub(crate) struct Stencil<'a> {
    phi: &'a [f64],
    dims: [usize; 3],
    strides: [usize; 3],
    h: [f64; 3],
}

impl<'a> Stencil<'a> {
    pub(crate) fn new(phi: &'a Volume3D) -> Self {
        let g = phi.geometry();
        Stencil {
            phi: phi.data(),
            dims: g.dims,
            strides: [1, g.dims[0], g.dims[0] * g.dims[1]],
            h: g.spacing,
        }
    }

    /// Neighbour index along `axis` by `d ∈ {-1, 0, 1}`, clamped at the border.
    #[inline]
    fn step(&self, idx: usize, c: [usize; 3], axis: usize, d: isize) -> usize {
        match d {
            -1 if c[axis] > 0 => idx - self.strides[axis],
            1 if c[axis] + 1 < self.dims[axis] => idx + self.strides[axis],
            _ => idx,
        }
    }

    #[inline]
    fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    #[inline]
    pub(crate) fn gradient(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        [0, 1, 2].map(|a| {
            let p = self.phi[self.step(idx, c, a, 1)];
            let m = self.phi[self.step(idx, c, a, -1)];
            (p - m) / (2.0 * self.h[a])
        })
    }

    /// Mean curvature `div(∇φ/|∇φ|)` from central differences in millimetres.
    pub(crate) fn curvature(&self, idx: usize) -> f64 {
        let c = self.coords(idx);
        let f = self.phi;
        let g = self.gradient(idx);
        let mut second = [[0.0; 3]; 3];
        for a in 0..3 {
            let p = f[self.step(idx, c, a, 1)];
            let m = f[self.step(idx, c, a, -1)];
            second[a][a] = (p - 2.0 * f[idx] + m) / (self.h[a] * self.h[a]);
            for b in a + 1..3 {
                let nb = |i: usize, axis: usize, d: isize| self.step(i, self.coords(i), axis, d);
                let (ap, am) = (nb(idx, a, 1), nb(idx, a, -1));
                let v = (f[nb(ap, b, 1)] - f[nb(ap, b, -1)] - f[nb(am, b, 1)] + f[nb(am, b, -1)])
                    / (4.0 * self.h[a] * self.h[b]);
                second[a][b] = v;
                second[b][a] = v;
            }
        }
        let [gx, gy, gz] = g;
        let norm2 = gx * gx + gy * gy + gz * gz;
        if norm2 < 1e-20 {
            return 0.0;
        }
        let num = second[0][0] * (gy * gy + gz * gz)
            + second[1][1] * (gx * gx + gz * gz)
            + second[2][2] * (gx * gx + gy * gy)
            - 2.0 * gx * gy * second[0][1]
            - 2.0 * gx * gz * second[0][2]
            - 2.0 * gy * gz * second[1][2];
        num / norm2.powf(1.5)
    }

    /// Length density `δ_ε(φ)·|∇φ|` at one voxel.
    #[inline]
    pub(crate) fn length_density(&self, idx: usize, eps: f64) -> f64 {
        let [gx, gy, gz] = self.gradient(idx);
        dirac(self.phi[idx], eps) * (gx * gx + gy * gy + gz * gz).sqrt()
    }
}

/// New values of `phi` at `indices` after one explicit step of
/// `∂φ/∂t = δ_ε(φ)·(force + λ·κ)`, with `force[k] = g_complement − g` at `indices[k]`.
pub(crate) fn advance(phi: &Volume3D, indices: &[usize], force: &[f64], lambda: f64, eps: f64, dt: f64) -> Vec<f64> {
    let st = Stencil::new(phi);
    indices
        .par_iter()
        .zip(force)
        .map(|(&i, &f)| {
            let p = phi.data()[i];
            let curv = if lambda > 0.0 { lambda * st.curvature(i) } else { 0.0 };
            p + dt * dirac(p, eps) * (f + curv)
        })
        .collect()
}

/// `Σ δ_ε(φ)|∇φ|` times the voxel volume.
pub fn perimeter(phi: &Volume3D, eps: f64) -> f64 {
    let st = Stencil::new(phi);
    let vv = phi.geometry().voxel_volume();
    (0..phi.data().len()).into_par_iter().map(|i| st.length_density(i, eps)).sum::<f64>() * vv
}

/// Discretized energy `Σ [H·g + (1 − H)·g_c] + λ·Σ δ|∇φ|`, times the voxel volume.
pub fn energy(phi: &Volume3D, data: &DataTermField, lambda: f64, eps: f64) -> f64 {
    let vv = phi.geometry().voxel_volume();
    let g = data.g().data();
    let gc = data.g_complement().data();
    let region: f64 = phi
        .data()
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let h = heaviside(p, eps);
            h * g[i] + (1.0 - h) * gc[i]
        })
        .sum();
    region * vv + lambda * perimeter(phi, eps)
}

/// One explicit descent step on every voxel; appends the new energy.
pub fn evolve_step(state: &LevelSetState, data: &DataTermField, dt: f64) -> Result<LevelSetState> {
    let geom: Geometry = *state.phi.geometry();
    if data.g().geometry() != &geom {
        return Err(Error::Shape("data term and level set on different grids".into()));
    }
    if !(dt > 0.0) || dt > max_stable_dt(geom.spacing, state.lambda) {
        return Err(Error::Parameter(format!(
            "time step {dt} outside (0, {}]",
            max_stable_dt(geom.spacing, state.lambda)
        )));
    }
    let eps = state.epsilon_mm();
    let g = data.g().data();
    let gc = data.g_complement().data();
    let all: Vec<usize> = (0..geom.len()).collect();
    let force: Vec<f64> = gc.iter().zip(g).map(|(c, g)| c - g).collect();
    let values = advance(&state.phi, &all, &force, state.lambda, eps, dt);
    let mut next = state.clone();
    next.phi = Volume3D::new(geom, values)?;
    next.iteration += 1;
    next.energy_trace.push(energy(&next.phi, data, state.lambda, eps));
    Ok(next)
}
