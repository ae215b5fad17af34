use std::fmt::Write as _;
use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use super::data::{back_project, global_residual, normalize_by_max};
use super::evolve::{advance, default_dt, interior, max_stable_dt, signed_distance, Stencil};
use super::heaviside::{heaviside, inside};
use super::LevelSetConfig;
use crate::error::{Error, Result};
use crate::features::{
    build_feature_matrix_with, FeatureConfig, FeatureScaling, LocalFeatureExtractor, FEATURE_ROWS,
    LOCAL_FEATURE_COUNT,
};
use crate::localization::SeedRegion;
use crate::shapeprior::{
    extract_patch_matrix, patch_to_volume, reconstruct_shape, shape_energy_weighted, ShapeSolveOptions,
    PATCH_COLUMNS, PATCH_ROWS,
};
use crate::sparse::{omp, reconstruct, Dictionary};
use crate::volume::{Geometry, Mask3D, Volume3D};

/// Trained dictionaries and the feature settings they were trained with.
#[derive(Debug, Clone)]
pub struct SegmentationModel {
    /// Region-feature dictionaries over scaled 42-row feature columns.
    pub liver: Dictionary,
    pub nonliver: Dictionary,
    /// Shape dictionary over 256-row patch columns.
    pub shape: Dictionary,
    pub scaling: FeatureScaling,
    pub features: FeatureConfig,
}

impl SegmentationModel {
    pub fn validate(&self) -> Result<()> {
        for (d, rows) in [(&self.liver, FEATURE_ROWS), (&self.nonliver, FEATURE_ROWS), (&self.shape, PATCH_ROWS)] {
            if d.rows() != rows {
                return Err(Error::Shape(format!("{:?} dictionary has {} rows, expected {rows}", d.label, d.rows())));
            }
        }
        if self.scaling.rows() != FEATURE_ROWS {
            return Err(Error::Shape(format!("feature scaling has {} rows", self.scaling.rows())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Interior volume settled for two consecutive outer iterations.
    Converged,
    MaxIterations,
    /// The interior vanished or swallowed the whole volume.
    Diverged,
}

/// One inner descent step. `before` and `after` are evaluated on the same
/// voxels (the narrow band and its neighbours), so they are comparable even
/// though the band moves between reinitializations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyStep {
    pub outer: usize,
    pub inner: usize,
    pub before: f64,
    pub after: f64,
    /// Interior volume in mm³ after the step.
    pub interior_volume: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuterRecord {
    pub outer: usize,
    pub interior_voxels: usize,
    /// Summed weighted coding residual of the interior's feature columns.
    pub liver_residual: f64,
    pub nonliver_residual: f64,
    pub shape_energy: f64,
    /// Mean number of shape atoms per patch column.
    pub shape_support: f64,
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub mask: Mask3D,
    pub phi: Volume3D,
    pub outcome: Outcome,
    pub steps: Vec<EnergyStep>,
    pub outer: Vec<OuterRecord>,
    pub lambda: f64,
    pub dt: f64,
}

impl SegmentationResult {
    /// `iteration,energy,interior_volume` with one row per inner step.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,energy,interior_volume\n");
        for (k, st) in self.steps.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", k + 1, st.after, st.interior_volume);
        }
        s
    }

    /// Share of inner steps whose energy did not increase.
    pub fn non_increasing_fraction(&self) -> f64 {
        if self.steps.is_empty() {
            return 1.0;
        }
        let ok = self
            .steps
            .iter()
            .filter(|s| s.after <= s.before + 1e-12 * s.before.abs().max(1.0))
            .count();
        ok as f64 / self.steps.len() as f64
    }
}

/// `(v + 1) / (mean(v) + 1)`: above 1 for entries worse than average.
fn relative_weights(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
    v.iter().map(|x| (x + 1.0) / (mean + 1.0)).collect()
}

/// Relative coding residuals of local feature vectors, computed on demand on
/// a coarse lattice and kept for the whole run.
struct LocalTerm<'a> {
    extractor: LocalFeatureExtractor<'a>,
    liver: Dictionary,
    nonliver: Dictionary,
    scaling: FeatureScaling,
    sparsity: usize,
    stride: usize,
    radius: [usize; 3],
    dims: [usize; 3],
    cells: [usize; 3],
    cache: Vec<Option<(f64, f64)>>,
}

impl<'a> LocalTerm<'a> {
    fn new(vol: &'a Volume3D, body: Option<&Mask3D>, model: &SegmentationModel, cfg: &LevelSetConfig) -> Result<Self> {
        let rows = 0..LOCAL_FEATURE_COUNT;
        let dims = vol.dims();
        let cells = dims.map(|n| n.div_ceil(cfg.local_stride));
        Ok(LocalTerm {
            extractor: LocalFeatureExtractor::masked(vol, body, &model.features, cfg.local_radius)?,
            liver: model.liver.restrict_rows(rows.clone())?,
            nonliver: model.nonliver.restrict_rows(rows)?,
            scaling: model.scaling.truncate(LOCAL_FEATURE_COUNT),
            sparsity: cfg.sparsity,
            stride: cfg.local_stride,
            radius: cfg.local_radius,
            dims,
            cells,
            cache: vec![None; cells[0] * cells[1] * cells[2]],
        })
    }

    fn cell(&self, idx: usize) -> usize {
        let [nx, ny, _] = self.dims;
        let s = self.stride;
        let (x, y, z) = (idx % nx / s, idx / nx % ny / s, idx / (nx * ny) / s);
        x + self.cells[0] * (y + self.cells[1] * z)
    }

    /// Cells of every window that contains voxel `idx`.
    fn covering(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let [nx, ny, nz] = self.dims;
        let p = [idx % nx, idx / nx % ny, idx / (nx * ny)];
        let span = |a: usize, n: usize| p[a].saturating_sub(self.radius[a])..(p[a] + self.radius[a] + 1).min(n);
        let (xs, ys, zs) = (span(0, nx), span(1, ny), span(2, nz));
        zs.flat_map(move |z| {
            let xs = xs.clone();
            ys.clone()
                .flat_map(move |y| xs.clone().map(move |x| x + nx * (y + ny * z)))
        })
        .map(|i| self.cell(i))
    }

    fn ensure(&mut self, voxels: &[usize]) -> Result<()> {
        let mut missing: Vec<usize> = voxels
            .iter()
            .flat_map(|&i| self.covering(i))
            .filter(|&c| self.cache[c].is_none())
            .collect();
        missing.sort_unstable();
        missing.dedup();
        let computed = missing
            .par_iter()
            .map(|&c| self.compute(c).map(|r| (c, r)))
            .collect::<Result<Vec<_>>>()?;
        for (c, r) in computed {
            self.cache[c] = Some(r);
        }
        Ok(())
    }

    fn compute(&self, cell: usize) -> Result<(f64, f64)> {
        let [cx, cy] = [self.cells[0], self.cells[1]];
        let c = [cell % cx, cell / cx % cy, cell / (cx * cy)];
        let p = [0, 1, 2].map(|a| (c[a] * self.stride + self.stride / 2).min(self.dims[a] - 1));
        let mut f = self.extractor.features_at(p[0], p[1], p[2]);
        self.scaling.apply(&mut f);
        let norm2: f64 = f.iter().map(|v| v * v).sum();
        if norm2 == 0.0 {
            return Ok((1.0, 1.0));
        }
        let rel = |d: &Dictionary| -> Result<f64> {
            let a = omp(d, &f, self.sparsity, 0.0)?;
            let r = reconstruct(d, &a)?;
            Ok(f.iter().zip(r.iter()).map(|(y, z)| (y - z) * (y - z)).sum::<f64>() / norm2)
        };
        Ok((rel(&self.liver)?, rel(&self.nonliver)?))
    }

    /// Residuals of the best-explained window containing `idx`: the one whose
    /// smaller residual is lowest. A voxel next to a boundary is then judged by
    /// a window that does not straddle it whenever such a window exists.
    fn residuals(&self, idx: usize) -> (f64, f64) {
        let mut best = (f64::INFINITY, (1.0, 1.0));
        for c in self.covering(idx) {
            let r = self.cache[c].expect("ensured before use");
            let m = r.0.min(r.1);
            if m < best.0 {
                best = (m, r);
            }
        }
        best.1
    }
}

/// Narrow band `|φ| ≤ width` and the ring of voxels 6-adjacent to it.
struct Band {
    inner: Vec<usize>,
    ring: Vec<usize>,
}

impl Band {
    fn new(phi: &Volume3D, width: f64) -> Band {
        let g = *phi.geometry();
        let inner: Vec<usize> = (0..g.len()).filter(|&i| phi.data()[i].abs() <= width).collect();
        let mut mark = vec![false; g.len()];
        for &i in &inner {
            mark[i] = true;
        }
        let [nx, ny, nz] = g.dims;
        let mut ring = Vec::new();
        for &i in &inner {
            let [x, y, z] = g.coords(i);
            let mut push = |j: usize| {
                if !mark[j] {
                    mark[j] = true;
                    ring.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < nx {
                push(i + 1);
            }
            if y > 0 {
                push(i - nx);
            }
            if y + 1 < ny {
                push(i + nx);
            }
            if z > 0 {
                push(i - nx * ny);
            }
            if z + 1 < nz {
                push(i + nx * ny);
            }
        }
        Band { inner, ring }
    }

    /// Energy restricted to the band: region costs on the band plus the
    /// length term wherever it can change (band and ring).
    fn energy(&self, phi: &Volume3D, g: &[f64], lambda: f64, eps: f64) -> f64 {
        let st = Stencil::new(phi);
        let region: f64 = self
            .inner
            .par_iter()
            .zip(g)
            .map(|(&i, &gi)| {
                let h = heaviside(phi.data()[i], eps);
                h * gi + (1.0 - h) * (1.0 - gi)
            })
            .sum();
        let length: f64 = self
            .inner
            .par_iter()
            .chain(self.ring.par_iter())
            .map(|&i| st.length_density(i, eps))
            .sum();
        (region + lambda * length) * phi.geometry().voxel_volume()
    }
}

/// Iteratively re-weighted level-set segmentation started from `seed`.
///
/// Every outer iteration:
///
/// 1. codes the region feature columns of the current interior with both
///    feature dictionaries, weighting each column by the relative residual of
///    the previous iteration; the per-slab weights scale the liver cost below;
/// 2. codes the interior's shape patches with the shape dictionary, with
///    per-column ℓ1 weights relaxed where the previous fit was poor, and paints
///    the clamped reconstruction `s` back into the interior's bounding box;
/// 3. sets the foreground cost of each body voxel to
///    `g = ω·r_L / (ω·r_L + r_N) · ((1 − w) + w·(1 − s)²)`, where `r_L`, `r_N`
///    are the relative OMP residuals, against the two dictionaries restricted
///    to the texture and HU rows, of the best-explained local window that
///    contains the voxel;
///    voxels outside the body cost 1;
/// 4. runs `inner_steps` narrow-band descent steps, reinitializing every
///    `reinit_every` steps.
pub fn run_segmentation(
    vol: &Volume3D,
    seed: &SeedRegion,
    model: &SegmentationModel,
    cfg: &LevelSetConfig,
) -> Result<SegmentationResult> {
    cfg.validate()?;
    model.validate()?;
    let geom: Geometry = *vol.geometry();
    let h = geom.min_spacing();
    let eps = cfg.epsilon * h;
    let dt = cfg.dt.unwrap_or_else(|| default_dt(geom.spacing, cfg.lambda));
    if dt > max_stable_dt(geom.spacing, cfg.lambda) {
        return Err(Error::Parameter(format!(
            "time step {dt} exceeds the stable bound {}",
            max_stable_dt(geom.spacing, cfg.lambda)
        )));
    }
    let seed_mask = seed.mask(geom);
    if seed_mask.is_blank() {
        return Err(Error::Localization(format!("empty seed box ({seed})")));
    }
    let mut phi = signed_distance(&seed_mask)?;
    let vv = geom.voxel_volume();
    let shape_opts = ShapeSolveOptions {
        max_iter: cfg.shape_max_iter,
        tol: cfg.shape_tol,
    };

    let body = cfg.body_threshold.map(|t| vol.threshold(|v| v > t));
    let mut local = LocalTerm::new(vol, body.as_ref(), model, cfg)?;
    let mut slab_weights: Option<(Vec<f64>, Vec<Range<usize>>)> = None;
    let mut shape_weights = vec![1.0; PATCH_COLUMNS];
    let mut steps = Vec::new();
    let mut records = Vec::new();
    let mut outcome = Outcome::MaxIterations;
    let mut settled = 0;

    'outer: for outer in 1..=cfg.max_outer {
        let region = interior(&phi);
        let start_count = region.count();
        if start_count == 0 || start_count == geom.len() {
            outcome = Outcome::Diverged;
            break;
        }

        if cfg.inner_steps > 0 {
            let fm = build_feature_matrix_with(vol, &region, &model.features)?;
            let cols = model.scaling.apply_columns(&fm.to_matrix())?;
            let prev = slab_weights.as_ref().map(|(w, _)| w.as_slice());
            let gr = global_residual(&cols, &model.liver, &model.nonliver, cfg.sparsity, prev)?;
            let omega = match &slab_weights {
                Some((w, slabs)) => back_project(w, slabs, geom, 1.0)?,
                None => Volume3D::filled(geom, 1.0),
            };
            slab_weights = Some((relative_weights(&gr.liver), fm.slabs().to_vec()));

            let vt = extract_patch_matrix(&region)?;
            let lambdas: Vec<f64> = shape_weights.iter().map(|w| cfg.shape_lambda() / w).collect();
            let fit = shape_energy_weighted(&vt, &model.shape, &lambdas, &shape_opts)?;
            shape_weights = relative_weights(&normalize_by_max(&fit.column_residual));
            let recon = reconstruct_shape(&model.shape, &fit.alpha)?;
            let bb = region.bounding_box().expect("interior is nonempty");
            let prior = patch_to_volume(&recon, &bb, geom);

            records.push(OuterRecord {
                outer,
                interior_voxels: start_count,
                liver_residual: gr.pooled_liver(),
                nonliver_residual: gr.pooled_nonliver(),
                shape_energy: fit.energy,
                shape_support: fit.mean_support(),
            });

            let w = cfg.shape_weight;
            let cost = |local: &LocalTerm, i: usize| {
                if body.as_ref().is_some_and(|b| !b.data()[i]) {
                    return 1.0;
                }
                let (rl, rn) = local.residuals(i);
                let a = omega.data()[i] * rl;
                let img = if a + rn > 0.0 { a / (a + rn) } else { 0.5 };
                let s = prior.data()[i];
                (img * ((1.0 - w) + w * (1.0 - s) * (1.0 - s))).clamp(0.0, 1.0)
            };

            let mut band = Band::new(&phi, cfg.band_width * h);
            local.ensure(&band.inner)?;
            let mut g: Vec<f64> = band.inner.iter().map(|&i| cost(&local, i)).collect();
            let mut count = start_count as i64;
            for inner in 0..cfg.inner_steps {
                if inner > 0 && inner % cfg.reinit_every == 0 {
                    match signed_distance(&interior(&phi)) {
                        Ok(p) => phi = p,
                        Err(Error::Degenerate(_)) => {
                            outcome = Outcome::Diverged;
                            break 'outer;
                        }
                        Err(e) => return Err(e),
                    }
                    band = Band::new(&phi, cfg.band_width * h);
                    local.ensure(&band.inner)?;
                    g = band.inner.iter().map(|&i| cost(&local, i)).collect();
                }
                let before = band.energy(&phi, &g, cfg.lambda, eps);
                let force: Vec<f64> = g.iter().map(|gi| (1.0 - gi) - gi).collect();
                let next = advance(&phi, &band.inner, &force, cfg.lambda, eps, dt);
                let data = phi.data_mut();
                for (&i, v) in band.inner.iter().zip(next) {
                    count += i64::from(inside(v)) - i64::from(inside(data[i]));
                    data[i] = v;
                }
                let after = band.energy(&phi, &g, cfg.lambda, eps);
                steps.push(EnergyStep {
                    outer,
                    inner: inner + 1,
                    before,
                    after,
                    interior_volume: count as f64 * vv,
                });
                if count == 0 {
                    outcome = Outcome::Diverged;
                    break 'outer;
                }
            }
        }

        let end_count = interior(&phi).count();
        let change = (end_count as f64 - start_count as f64).abs() / start_count as f64;
        settled = if change < cfg.convergence_tol { settled + 1 } else { 0 };
        if settled >= 2 {
            outcome = Outcome::Converged;
            break;
        }
    }

    Ok(SegmentationResult {
        mask: interior(&phi),
        phi,
        outcome,
        steps,
        outer: records,
        lambda: cfg.lambda,
        dt,
    })
}
