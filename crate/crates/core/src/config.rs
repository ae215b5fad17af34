//! Pipeline configuration as a JSON document. Every field has a default, so
//! `{}` is a complete configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::levelset::LevelSetConfig;
use crate::localization::LocalizationOptions;
use crate::sparse::KsvdOptions;

/// K-SVD settings for the three dictionaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionaryConfig {
    /// Atoms of each region-feature dictionary (liver and non-liver).
    pub feature_atoms: usize,
    pub shape_atoms: usize,
    /// OMP sparsity used for training and for coding at segmentation time.
    pub sparsity: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            feature_atoms: 64,
            shape_atoms: 128,
            sparsity: 5,
            iterations: 30,
            seed: 0,
        }
    }
}

impl DictionaryConfig {
    pub fn feature_options(&self, seed_offset: u64) -> KsvdOptions {
        KsvdOptions::new(self.feature_atoms, self.sparsity, self.iterations, self.seed.wrapping_add(seed_offset))
    }

    pub fn shape_options(&self) -> KsvdOptions {
        KsvdOptions::new(self.shape_atoms, self.sparsity, self.iterations, self.seed.wrapping_add(2))
    }

    fn validate(&self) -> Result<()> {
        if self.feature_atoms == 0 || self.shape_atoms == 0 {
            return Err(Error::Parameter("dictionaries need at least one atom".into()));
        }
        if self.sparsity == 0 || self.iterations == 0 {
            return Err(Error::Parameter("sparsity and iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory holding the trained dictionaries.
    pub dictionaries: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dictionaries: DictionaryConfig,
    pub features: FeatureConfig,
    pub localization: LocalizationOptions,
    /// Level-set settings, including `lambda` (0.7).
    pub levelset: LevelSetConfig,
    pub paths: PathsConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.dictionaries.validate()?;
        self.levelset.validate()?;
        let f = &self.features;
        if !(f.window_width > 0.0) || f.levels < 2 {
            return Err(Error::Parameter("feature window width must be positive and levels ≥ 2".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
