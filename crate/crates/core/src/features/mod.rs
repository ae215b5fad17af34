//! Region-based features: GLCM texture, HU statistics and volume properties.

mod glcm;
mod haralick;
mod local;
mod matrix;
mod props;
mod scaling;

pub use glcm::{glcm, GlcmMatrix, Offset, QuantizedVolume, Quantizer, OFFSETS};
pub use haralick::{haralick, haralick_constant, haralick_sparse, HARALICK_COUNT, HARALICK_NAMES};
pub use local::{LocalFeatureExtractor, LOCAL_FEATURE_COUNT};
pub use matrix::{
    build_feature_matrix, build_feature_matrix_with, read_feature_matrix, row_names, slab_ranges,
    write_feature_matrix, FeatureConfig, FeatureMatrix, FEATURE_COLUMNS, FEATURE_ROWS, HU_ROW,
    TEXTURE_ROWS, VOLUME_ROWS,
};
pub use props::{euler_number, volume_properties, VolumeProperties};
pub use scaling::FeatureScaling;
