//! Dictionary training from labelled volumes, model persistence and
//! end-to-end segmentation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::features::{build_feature_matrix_with, FeatureConfig, FeatureScaling};
use crate::levelset::{run_segmentation, SegmentationModel, SegmentationResult};
use crate::localization::{localize, SeedRegion};
use crate::shapeprior::train_shape_dictionary;
use crate::sparse::{ksvd_with, read_dictionary, write_dictionary, Dictionary, KsvdResult};
use crate::volume::{Mask3D, Volume3D};

pub const LIVER_DICTIONARY: &str = "liver_dictionary.bin";
pub const NONLIVER_DICTIONARY: &str = "nonliver_dictionary.bin";
pub const SHAPE_DICTIONARY: &str = "shape_dictionary.bin";
pub const TRAINING_LOG: &str = "training_log.csv";

/// Voxels above this are body tissue; non-liver samples come from body minus liver.
pub const BODY_THRESHOLD_HU: f64 = -500.0;

#[derive(Debug, Clone)]
pub struct TrainingCase {
    pub volume: Volume3D,
    pub liver: Mask3D,
}

pub fn body_mask(vol: &Volume3D) -> Mask3D {
    vol.threshold(|v| v > BODY_THRESHOLD_HU)
}

/// One K-SVD iteration of one dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub dictionary: String,
    pub iteration: usize,
    pub after_coding: f64,
    pub after_update: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: SegmentationModel,
    pub log: Vec<TrainingRecord>,
}

impl TrainedModel {
    pub fn log_csv(&self) -> String {
        let mut s = String::from("dictionary,iteration,after_coding,after_update\n");
        for r in &self.log {
            let _ = writeln!(s, "{},{},{},{}", r.dictionary, r.iteration, r.after_coding, r.after_update);
        }
        s
    }

    /// Writes the three dictionaries and the training log into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_dictionary(&self.model.liver, dir.join(LIVER_DICTIONARY))?;
        write_dictionary(&self.model.nonliver, dir.join(NONLIVER_DICTIONARY))?;
        write_dictionary(&self.model.shape, dir.join(SHAPE_DICTIONARY))?;
        let log = dir.join(TRAINING_LOG);
        std::fs::write(&log, self.log_csv()).map_err(|e| Error::io(&log, e))
    }
}

fn records<'a>(name: &str, r: &'a KsvdResult) -> impl Iterator<Item = TrainingRecord> + 'a {
    let name = name.to_string();
    r.after_coding
        .iter()
        .zip(&r.after_update)
        .enumerate()
        .map(move |(i, (&c, &u))| TrainingRecord {
            dictionary: name.clone(),
            iteration: i + 1,
            after_coding: c,
            after_update: u,
        })
}

fn feature_meta(f: &FeatureConfig) -> Vec<(String, String)> {
    vec![
        ("window_center".into(), f.window_center.to_string()),
        ("window_width".into(), f.window_width.to_string()),
        ("levels".into(), f.levels.to_string()),
    ]
}

fn feature_config_from(d: &Dictionary) -> Result<FeatureConfig> {
    let mut f = FeatureConfig::default();
    let bad = |k: &str| Error::Format(format!("bad `{k}` metadata"));
    if let Some(v) = d.meta_value("window_center") {
        f.window_center = v.parse().map_err(|_| bad("window_center"))?;
    }
    if let Some(v) = d.meta_value("window_width") {
        f.window_width = v.parse().map_err(|_| bad("window_width"))?;
    }
    if let Some(v) = d.meta_value("levels") {
        f.levels = v.parse().map_err(|_| bad("levels"))?;
    }
    Ok(f)
}

fn hstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut m = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        m.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    m
}

/// Learns the liver and non-liver feature dictionaries and the shape
/// dictionary from labelled volumes.
pub fn train(cases: &[TrainingCase], cfg: &PipelineConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if cases.is_empty() {
        return Err(Error::EmptyInput("training needs at least one labelled volume".into()));
    }
    let mut liver_cols = Vec::with_capacity(cases.len());
    let mut other_cols = Vec::with_capacity(cases.len());
    for (k, c) in cases.iter().enumerate() {
        c.liver.check_same_geometry(c.volume.geometry())?;
        if c.liver.is_blank() {
            return Err(Error::EmptyInput(format!("training case {k} has an empty liver mask")));
        }
        let other = body_mask(&c.volume).and_not(&c.liver);
        if other.is_blank() {
            return Err(Error::EmptyInput(format!("training case {k} has no body voxels outside the liver")));
        }
        liver_cols.push(build_feature_matrix_with(&c.volume, &c.liver, &cfg.features)?.to_matrix());
        other_cols.push(build_feature_matrix_with(&c.volume, &other, &cfg.features)?.to_matrix());
    }
    let liver_raw = hstack(&liver_cols);
    let other_raw = hstack(&other_cols);
    let scaling = FeatureScaling::fit(&hstack(&[liver_raw.clone(), other_raw.clone()]))?;

    let d = &cfg.dictionaries;
    let liver = ksvd_with(&scaling.apply_columns(&liver_raw)?, &d.feature_options(0))?;
    let other = ksvd_with(&scaling.apply_columns(&other_raw)?, &d.feature_options(1))?;
    let masks: Vec<Mask3D> = cases.iter().map(|c| c.liver.clone()).collect();
    let shape = train_shape_dictionary(&masks, &d.shape_options())?;

    let log = records("liver", &liver)
        .chain(records("nonliver", &other))
        .chain(records("shape", &shape))
        .collect();

    let mut liver_dict = liver.dictionary.with_label("liver");
    liver_dict.meta.extend(scaling.to_meta());
    liver_dict.meta.extend(feature_meta(&cfg.features));
    Ok(TrainedModel {
        model: SegmentationModel {
            liver: liver_dict,
            nonliver: other.dictionary.with_label("nonliver"),
            shape: shape.dictionary,
            scaling,
            features: cfg.features,
        },
        log,
    })
}

/// The three dictionary paths inside `dir`.
pub fn model_paths(dir: impl AsRef<Path>) -> [PathBuf; 3] {
    let dir = dir.as_ref();
    [LIVER_DICTIONARY, NONLIVER_DICTIONARY, SHAPE_DICTIONARY].map(|f| dir.join(f))
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<SegmentationModel> {
    let [l, n, s] = model_paths(dir);
    let liver = read_dictionary(&l)?;
    let nonliver = read_dictionary(&n)?;
    let shape = read_dictionary(&s)?;
    let scaling = FeatureScaling::from_meta(|k| liver.meta_value(k).map(String::from))?;
    let features = feature_config_from(&liver)?;
    let model = SegmentationModel {
        liver,
        nonliver,
        shape,
        scaling,
        features,
    };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub seed: SeedRegion,
    pub result: SegmentationResult,
}

/// Localizes the liver and evolves the level set from the seed box.
pub fn segment(vol: &Volume3D, model: &SegmentationModel, cfg: &PipelineConfig) -> Result<Segmentation> {
    cfg.validate()?;
    let seed = localize(vol, &cfg.localization)?;
    let result = run_segmentation(vol, &seed, model, &cfg.levelset)?;
    Ok(Segmentation { seed, result })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_phantom, PhantomSpec};

    fn small_config() -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.dictionaries.feature_atoms = 16;
        cfg.dictionaries.shape_atoms = 16;
        cfg.dictionaries.iterations = 5;
        cfg
    }

    fn case(seed: u64) -> TrainingCase {
        let p = generate_phantom(&PhantomSpec {
            dims: [32, 32, 32],
            seed,
            ..Default::default()
        })
        .unwrap();
        TrainingCase {
            volume: p.volume,
            liver: p.liver,
        }
    }

    #[test]
    fn train_save_load_round_trip() {
        let cfg = small_config();
        let trained = train(&[case(1), case(2)], &cfg).unwrap();
        for name in ["liver", "nonliver", "shape"] {
            let rows: Vec<_> = trained.log.iter().filter(|r| r.dictionary == name).collect();
            assert_eq!(rows.len(), 5);
            for r in rows {
                assert!(r.after_update <= r.after_coding * (1.0 + 1e-12), "{name} {r:?}");
            }
        }
        let dir = tempfile::tempdir().unwrap();
        trained.save(dir.path()).unwrap();
        let loaded = load_model(dir.path()).unwrap();
        assert_eq!(loaded.liver.matrix(), trained.model.liver.matrix());
        assert_eq!(loaded.scaling, trained.model.scaling);
        assert_eq!(loaded.features, cfg.features);
        let again = train(&[case(1), case(2)], &cfg).unwrap();
        assert_eq!(again.model.shape.matrix(), trained.model.shape.matrix());
    }

    #[test]
    fn no_cases_and_missing_files() {
        assert!(matches!(train(&[], &small_config()), Err(Error::EmptyInput(_))));
        let dir = tempfile::tempdir().unwrap();
        match load_model(dir.path()) {
            Err(Error::Io { path, .. }) => assert!(path.to_string_lossy().contains("liver_dictionary"), "{path:?}"),
            other => panic!("{other:?}"),
        }
    }
}
