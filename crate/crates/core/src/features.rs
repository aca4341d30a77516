//! Per-image model inputs: the ridge-signal spectrum and the log-magnitude
//! FFT plane.

use serde::{Deserialize, Serialize};

use crate::enhance::{ridge_preprocess, RidgeParams};
use crate::error::{Error, Result};
use crate::imgproc::{center_crop_or_pad, GrayImage, WHITE};
use crate::par;
use crate::ridge::{raw_ridge_feature, segment_curves, trace_all_ridges, SEGMENT_LEN};
use crate::spectrum::{fft_logmag, Spectrum2D, LOG_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub ridge: RidgeParams,
    /// Gaussian smoothing of along-ridge signals; 0 disables it.
    pub sigma: f64,
    pub segment_len: usize,
    pub log_epsilon: f64,
    /// Centered crop, or padding with white, to `[width, height]` before
    /// anything else; unset keeps each image's own size.
    pub input_size: Option<[usize; 2]>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { ridge: RidgeParams::default(), sigma: 2.0, segment_len: SEGMENT_LEN, log_epsilon: LOG_EPSILON, input_size: None }
    }
}

/// Log-magnitude FFT plane in f32, row-major, DC at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl FreqMap {
    pub fn from_spectrum(spec: &Spectrum2D) -> Self {
        Self { width: spec.width, height: spec.height, values: spec.values.iter().map(|&v| v as f32).collect() }
    }

    /// Plane of the horizontally flipped image.
    pub fn mirrored(&self) -> Self {
        let w = self.width;
        let mut values = vec![0.0; self.values.len()];
        for (src, dst) in self.values.chunks_exact(w).zip(values.chunks_exact_mut(w)) {
            for u in 0..w {
                dst[(w - u) % w] = src[u];
            }
        }
        Self { width: w, height: self.height, values }
    }
}

/// Model inputs of one image. `ridge` is `None` when no ridge was long
/// enough for a full segment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleFeatures {
    pub ridge: Option<Vec<f32>>,
    /// Ridge feature of the horizontally flipped image, for augmentation.
    pub ridge_flipped: Option<Vec<f32>>,
    pub freq: Option<FreqMap>,
}

impl SampleFeatures {
    pub fn no_ridges(&self) -> bool {
        self.ridge.is_none()
    }
}

/// Ridge feature of one image; `Err(NoRidges)` when no segment fits.
pub fn ridge_feature(img: &GrayImage, cfg: &FeatureConfig) -> Result<Vec<f32>> {
    let skeleton = ridge_preprocess(img, &cfg.ridge)?;
    let curves = trace_all_ridges(&skeleton)?;
    let segments = segment_curves(&curves, cfg.segment_len);
    let raw = raw_ridge_feature(img, &segments, cfg.sigma)?;
    Ok(raw.values.iter().map(|&v| v as f32).collect())
}

pub fn freq_feature(img: &GrayImage, cfg: &FeatureConfig) -> FreqMap {
    FreqMap::from_spectrum(&fft_logmag(img, cfg.log_epsilon))
}

fn optional_ridge(img: &GrayImage, cfg: &FeatureConfig) -> Result<Option<Vec<f32>>> {
    match ridge_feature(img, cfg) {
        Ok(v) => Ok(Some(v)),
        Err(Error::NoRidges) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Which parts of [`SampleFeatures`] to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Wanted {
    pub ridge: bool,
    pub ridge_flipped: bool,
    pub freq: bool,
}

impl Wanted {
    pub const ALL: Wanted = Wanted { ridge: true, ridge_flipped: true, freq: true };
    pub const EVAL: Wanted = Wanted { ridge: true, ridge_flipped: false, freq: true };
}

pub fn extract(img: &GrayImage, cfg: &FeatureConfig, wanted: Wanted) -> Result<SampleFeatures> {
    let sized;
    let img = match cfg.input_size {
        Some([w, h]) if w == 0 || h == 0 => {
            return Err(Error::InvalidParameter(format!("input_size {w}x{h} must be positive")));
        }
        Some([w, h]) if (w, h) != (img.width(), img.height()) => {
            sized = center_crop_or_pad(img, w, h, WHITE);
            &sized
        }
        _ => img,
    };
    let ridge = if wanted.ridge { optional_ridge(img, cfg)? } else { None };
    let ridge_flipped = if wanted.ridge_flipped { optional_ridge(&img.flip_horizontal(), cfg)? } else { None };
    let freq = wanted.freq.then(|| freq_feature(img, cfg));
    Ok(SampleFeatures { ridge, ridge_flipped, freq })
}

/// Extracts every image with the available parallel backend; order is kept.
pub fn extract_batch(images: &[GrayImage], cfg: &FeatureConfig, wanted: Wanted) -> Vec<Result<SampleFeatures>> {
    par::map(images, |img| extract(img, cfg, wanted))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_matches_flipped_image() {
        let img = GrayImage::from_fn(12, 9, |x, y| ((x * 31 + y * 17 + x * y) % 256) as u8);
        let cfg = FeatureConfig::default();
        let a = freq_feature(&img, &cfg).mirrored();
        let b = freq_feature(&img.flip_horizontal(), &cfg);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-4, "{x} vs {y}");
        }
    }

    #[test]
    fn blank_image_has_no_ridges() {
        let img = GrayImage::filled(64, 64, 200);
        let f = extract(&img, &FeatureConfig::default(), Wanted::EVAL).unwrap();
        assert!(f.no_ridges());
        assert_eq!(f.freq.unwrap().values.len(), 64 * 64);
    }

    #[test]
    fn input_size_crops_and_pads() {
        let img = GrayImage::from_fn(40, 24, |x, y| ((x * 7 + y * 3) % 256) as u8);
        let cfg = FeatureConfig { input_size: Some([32, 32]), ..FeatureConfig::default() };
        let f = extract(&img, &cfg, Wanted { ridge: false, ridge_flipped: false, freq: true }).unwrap();
        let m = f.freq.unwrap();
        assert_eq!((m.width, m.height), (32, 32));
        let bad = FeatureConfig { input_size: Some([0, 32]), ..cfg };
        assert!(extract(&img, &bad, Wanted::EVAL).is_err());
    }
}
