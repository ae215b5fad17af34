//! Liver segmentation from CT volumes with sparse global and local priors
//! embedded in a level-set formulation.
//!
//! The crate is organised bottom-up:
//!
//! - [`volume`]: grids, MetaImage I/O, components, distance transforms
//! - [`features`]: GLCM/Haralick texture, volume properties, the 42×160 feature matrix
//! - [`sparse`]: dictionaries, OMP, K-SVD and an ℓ1 proximal solver
//! - [`shapeprior`]: patch matrices and the sparse shape prior
//! - [`localization`]: HU thresholding and the initial seed box
//! - [`levelset`]: data term, curve evolution and the re-weighted outer loop
//! - [`metrics`]: VOE, VD, surface distances and challenge scores
//! - [`config`]: the JSON pipeline configuration
//! - [`phantom`]: synthetic phantoms with known truth
//! - [`pipeline`]: training/segmentation orchestration used by the CLI

pub mod config;
pub mod error;
pub mod features;
pub mod levelset;
pub mod localization;
pub mod matrix_io;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod shapeprior;
pub mod sparse;
pub mod volume;

pub use error::{Error, Result};
