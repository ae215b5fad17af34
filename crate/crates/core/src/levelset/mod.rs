//! Level-set segmentation driven by sparse-coding residuals.
//!
//! The field `φ` is positive inside the segmented region. Each voxel pays
//! `g` when labeled foreground and `g_complement = 1 − g` when labeled
//! background, plus `λ` times the smoothed surface area. Descent follows
//! `∂φ/∂t = δ_ε(φ)·(g_complement − g + λ·κ)`.

mod data;
mod engine;
mod evolve;
mod heaviside;

pub use data::{back_project, build_data_term, global_residual, normalize_by_max, DataTermField, GlobalResidual};
pub use engine::{run_segmentation, EnergyStep, OuterRecord, Outcome, SegmentationModel, SegmentationResult};
pub use evolve::{
    default_dt, energy, evolve_step, interior, max_stable_dt, perimeter, reinitialize, signed_distance,
    LevelSetState,
};
pub use heaviside::{dirac, heaviside, inside};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelSetConfig {
    /// Weight of the surface-area term and default ℓ1 weight of the shape code.
    pub lambda: f64,
    /// Heaviside width in voxels.
    pub epsilon: f64,
    /// Time step; `None` picks [`default_dt`].
    pub dt: Option<f64>,
    pub inner_steps: usize,
    pub reinit_every: usize,
    pub max_outer: usize,
    /// Narrow-band half width in voxels.
    pub band_width: f64,
    /// Relative interior-volume change under which an outer iteration counts as settled.
    pub convergence_tol: f64,
    /// OMP sparsity when coding feature vectors.
    pub sparsity: usize,
    /// Half-size of the local texture window (x, y, z) in voxels.
    pub local_radius: [usize; 3],
    /// Local features are evaluated on a lattice with this spacing and shared by the voxels of each cell.
    pub local_stride: usize,
    /// Voxels at or below this intensity are outside the body: they never join
    /// the interior and local windows ignore them. `null` disables the rule.
    pub body_threshold: Option<f64>,
    /// Blend of the shape residual into the data term, in `[0, 1]`.
    pub shape_weight: f64,
    /// ℓ1 weight for shape coding; `None` reuses `lambda`.
    pub shape_lambda: Option<f64>,
    pub shape_max_iter: usize,
    pub shape_tol: f64,
}

impl Default for LevelSetConfig {
    fn default() -> Self {
        LevelSetConfig {
            lambda: 0.7,
            epsilon: 1.5,
            dt: None,
            inner_steps: 40,
            reinit_every: 10,
            max_outer: 15,
            band_width: 3.0,
            convergence_tol: 1e-3,
            sparsity: 5,
            local_radius: [1, 1, 1],
            local_stride: 1,
            body_threshold: Some(-500.0),
            shape_weight: 0.5,
            shape_lambda: None,
            shape_max_iter: 500,
            shape_tol: 1e-6,
        }
    }
}

impl LevelSetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Parameter(what.to_string()));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return bad("dt must be positive");
            }
        }
        if self.reinit_every == 0 || self.max_outer == 0 || self.sparsity == 0 || self.local_stride == 0 {
            return bad("reinit_every, max_outer, sparsity and local_stride must be at least 1");
        }
        if !(self.band_width >= 1.0) {
            return bad("band_width must be at least one voxel");
        }
        if !(0.0..=1.0).contains(&self.shape_weight) {
            return bad("shape_weight must lie in [0, 1]");
        }
        if !(self.convergence_tol >= 0.0) || !(self.shape_tol >= 0.0) {
            return bad("tolerances must be non-negative");
        }
        if self.shape_lambda.is_some_and(|l| !(l >= 0.0)) {
            return bad("shape_lambda must be non-negative");
        }
        Ok(())
    }

    pub fn shape_lambda(&self) -> f64 {
        self.shape_lambda.unwrap_or(self.lambda)
    }
}
