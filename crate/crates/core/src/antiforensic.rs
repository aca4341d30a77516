//! Spectrum correction of fake images: mean log-spectrum difference
//! normalization (SDN), radial power distribution correction (PDC) and
//! their composition.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::imgproc::GrayImage;
use crate::nn::Tensor;
use crate::spectrum::{centered_freq, fft2_bins, ifft2_real, mean_spectrum, Spectrum2D, SpectrumKind};

/// Mean real log-magnitude minus mean fake log-magnitude, per FFT bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SdnCorrection {
    pub delta: Spectrum2D,
}

/// Radial power profiles of real images.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumDictionary {
    pub radius_bins: usize,
    pub entries: Vec<Vec<f64>>,
}

pub const MIN_RADIUS_BINS: usize = 4;
/// Per-bin power ratios applied by PDC are clamped to `[1/R, R]`.
pub const PDC_RATIO_LIMIT: f64 = 10.0;

fn check_dims(img: &GrayImage, w: usize, h: usize) -> Result<()> {
    if (img.width(), img.height()) != (w, h) {
        return Err(Error::dims(format!("{w}x{h}"), format!("{}x{}", img.width(), img.height())));
    }
    Ok(())
}

pub fn fit_sdn(real: &[GrayImage], fake: &[GrayImage], epsilon: f64) -> Result<SdnCorrection> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let r = mean_spectrum(real, SpectrumKind::FftLogmag, epsilon)?;
    let f = mean_spectrum(fake, SpectrumKind::FftLogmag, epsilon)?;
    r.check_same(&f)?;
    let values = r.values.iter().zip(&f.values).map(|(a, b)| a - b).collect();
    Ok(SdnCorrection { delta: Spectrum2D::new(r.width, r.height, SpectrumKind::FftLogmag, values)? })
}

/// Rebuilds an 8-bit image from bins scaled by a real, non-negative gain
/// per bin; phases are untouched.
fn rescale(bins: &mut [Complex64], gain: impl Fn(usize, usize) -> f64, w: usize, h: usize) -> GrayImage {
    for v in 0..h {
        for u in 0..w {
            bins[v * w + u] *= gain(u, v);
        }
    }
    ifft2_real(bins, w, h).to_gray_clamped()
}

/// Multiplies each bin magnitude by `exp(delta)`. The delta is averaged with
/// its point reflection first so the corrected spectrum stays Hermitian.
pub fn apply_sdn(img: &GrayImage, corr: &SdnCorrection) -> Result<GrayImage> {
    let (w, h) = (corr.delta.width, corr.delta.height);
    check_dims(img, w, h)?;
    let d = &corr.delta.values;
    let mut bins = fft2_bins(&img.to_float());
    let gain = |u: usize, v: usize| {
        let mirror = ((h - v) % h) * w + (w - u) % w;
        ((d[v * w + u] + d[mirror]) / 2.0).exp()
    };
    Ok(rescale(&mut bins, gain, w, h))
}

/// Radial bin of `(u, v)`: radius from DC over the corner radius.
fn radius_bin(u: usize, v: usize, w: usize, h: usize, bins: usize) -> usize {
    let fu = centered_freq(u, w) / (w as f64 / 2.0);
    let fv = centered_freq(v, h) / (h as f64 / 2.0);
    let r = fu.hypot(fv) / std::f64::consts::SQRT_2;
    ((r * bins as f64) as usize).min(bins - 1)
}

fn profile_of_bins(bins: &[Complex64], w: usize, h: usize, radius_bins: usize) -> Vec<f64> {
    let mut sum = vec![0.0; radius_bins];
    let mut count = vec![0usize; radius_bins];
    for v in 0..h {
        for u in 0..w {
            let b = radius_bin(u, v, w, h, radius_bins);
            sum[b] += bins[v * w + u].norm_sqr();
            count[b] += 1;
        }
    }
    sum.iter().zip(&count).map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 }).collect()
}

/// Azimuthal mean of `|FFT|^2` in `radius_bins` rings.
pub fn radial_power_profile(img: &GrayImage, radius_bins: usize) -> Result<Vec<f64>> {
    if radius_bins < MIN_RADIUS_BINS {
        return Err(Error::InvalidParameter(format!("radius_bins must be >= {MIN_RADIUS_BINS}")));
    }
    Ok(profile_of_bins(&fft2_bins(&img.to_float()), img.width(), img.height(), radius_bins))
}

pub fn fit_power_dictionary(real: &[GrayImage], radius_bins: usize) -> Result<SpectrumDictionary> {
    if real.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let entries = real.iter().map(|img| radial_power_profile(img, radius_bins)).collect::<Result<_>>()?;
    Ok(SpectrumDictionary { radius_bins, entries })
}

impl SpectrumDictionary {
    /// Entry closest to `profile` in L2 over `ln(1 + power)`, so that the
    /// DC ring does not dominate the choice.
    pub fn nearest(&self, profile: &[f64]) -> Result<&[f64]> {
        let log = |p: &[f64]| p.iter().map(|v| v.ln_1p()).collect::<Vec<_>>();
        let target = log(profile);
        self.entries
            .iter()
            .map(|e| {
                let d: f64 = log(e).iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum();
                (d, e)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, e)| e.as_slice())
            .ok_or(Error::EmptyDictionary)
    }
}

/// Ring gain `sqrt(target / current)` with the ratio clamped; empty rings
/// on both sides keep gain 1.
fn ring_gain(target: f64, current: f64) -> f64 {
    let ratio = if current <= 0.0 {
        if target <= 0.0 {
            1.0
        } else {
            PDC_RATIO_LIMIT
        }
    } else {
        target / current
    };
    ratio.clamp(1.0 / PDC_RATIO_LIMIT, PDC_RATIO_LIMIT).sqrt()
}

/// Rescales each radial ring so the image's power profile follows the
/// nearest dictionary entry.
pub fn apply_pdc(img: &GrayImage, dict: &SpectrumDictionary) -> Result<GrayImage> {
    if dict.entries.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    let (w, h, nb) = (img.width(), img.height(), dict.radius_bins);
    let mut bins = fft2_bins(&img.to_float());
    let current = profile_of_bins(&bins, w, h, nb);
    let target = dict.nearest(&current)?;
    if target.len() != nb {
        return Err(Error::dims(nb, target.len()));
    }
    let gains: Vec<f64> = target.iter().zip(&current).map(|(&t, &c)| ring_gain(t, c)).collect();
    Ok(rescale(&mut bins, |u, v| gains[radius_bin(u, v, w, h, nb)], w, h))
}

pub fn sdn_plus_plus(img: &GrayImage, corr: &SdnCorrection, dict: &SpectrumDictionary) -> Result<GrayImage> {
    apply_pdc(&apply_sdn(img, corr)?, dict)
}

impl SdnCorrection {
    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        let d = &self.delta;
        let data = d.values.iter().map(|&v| v as f32).collect();
        vec![("sdn.delta".into(), Tensor::new(&[d.height, d.width], data).expect("shape"))]
    }

    pub fn from_tensors(tensors: &[(String, Tensor)]) -> Result<Self> {
        let t = find(tensors, "sdn.delta")?;
        if t.shape().len() != 2 {
            return Err(Error::Corrupt("sdn.delta must be 2-D".into()));
        }
        let values = t.data().iter().map(|&v| v as f64).collect();
        Ok(Self { delta: Spectrum2D::new(t.shape()[1], t.shape()[0], SpectrumKind::FftLogmag, values)? })
    }
}

impl SpectrumDictionary {
    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        let data = self.entries.iter().flatten().map(|&v| v as f32).collect();
        vec![("pdc.entries".into(), Tensor::new(&[self.entries.len(), self.radius_bins], data).expect("shape"))]
    }

    pub fn from_tensors(tensors: &[(String, Tensor)]) -> Result<Self> {
        let t = find(tensors, "pdc.entries")?;
        if t.shape().len() != 2 || t.shape()[1] < MIN_RADIUS_BINS {
            return Err(Error::Corrupt("pdc.entries must be [entries, bins]".into()));
        }
        let bins = t.shape()[1];
        let entries = t.data().chunks_exact(bins).map(|c| c.iter().map(|&v| v as f64).collect()).collect();
        Ok(Self { radius_bins: bins, entries })
    }
}

fn find<'a>(tensors: &'a [(String, Tensor)], key: &str) -> Result<&'a Tensor> {
    tensors.iter().find(|(n, _)| n == key).map(|(_, t)| t).ok_or_else(|| Error::Corrupt(format!("missing {key}")))
}
