//! Fingerprint enhancement and skeleton preparation.
//!
//! The full chain is median, Gabor, median, binarize, pore fill, thin and
//! branch removal; [`ridge_preprocess_stages`] keeps every intermediate.

mod gabor;
mod morphology;

pub use gabor::{estimate_orientation, gabor_enhance, gabor_kernel, OrientationField, GABOR_SIGMA};
pub use morphology::{
    count_components, fill_pores, has_black_2x2, is_simple, neighbor_groups, neighbor_mask,
    remove_y_junctions, thin, RING,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imgproc::{median_filter, threshold_binarize, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RidgeParams {
    pub threshold: u8,
    pub median_radius: usize,
    pub block_size: usize,
    pub ridge_freq: f64,
}

impl Default for RidgeParams {
    fn default() -> Self {
        Self { threshold: 100, median_radius: 1, block_size: 16, ridge_freq: 0.1 }
    }
}

/// Every intermediate of the ridge preparation chain, in order.
#[derive(Debug, Clone)]
pub struct PreprocessStages {
    pub median: GrayImage,
    pub gabor: GrayImage,
    pub median2: GrayImage,
    pub binary: GrayImage,
    pub filled: GrayImage,
    pub thinned: GrayImage,
    pub skeleton: GrayImage,
}

impl PreprocessStages {
    pub fn named(&self) -> [(&'static str, &GrayImage); 7] {
        [
            ("1_median", &self.median),
            ("2_gabor", &self.gabor),
            ("3_median", &self.median2),
            ("4_binary", &self.binary),
            ("5_filled", &self.filled),
            ("6_thinned", &self.thinned),
            ("7_skeleton", &self.skeleton),
        ]
    }
}

pub fn ridge_preprocess_stages(img: &GrayImage, params: &RidgeParams) -> Result<PreprocessStages> {
    let median = median_filter(img, params.median_radius);
    let field = estimate_orientation(&median, params.block_size);
    let gabor = gabor_enhance(&median, &field, params.ridge_freq);
    let median2 = median_filter(&gabor, params.median_radius);
    let binary = threshold_binarize(&median2, params.threshold);
    let filled = fill_pores(&binary)?;
    let thinned = thin(&filled)?;
    let skeleton = remove_y_junctions(&thinned)?;
    Ok(PreprocessStages { median, gabor, median2, binary, filled, thinned, skeleton })
}

/// Skeleton with branch points removed, ready for ridge tracing.
pub fn ridge_preprocess(img: &GrayImage, params: &RidgeParams) -> Result<GrayImage> {
    Ok(ridge_preprocess_stages(img, params)?.skeleton)
}
