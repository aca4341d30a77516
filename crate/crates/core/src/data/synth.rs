//! Synthetic fingerprints.
//!
//! Ridges are level sets of a warped distance to a core point with a
//! cosine cross-section. Real-like impressions darken each ridge by a
//! ridge-valley contrast that varies slowly along the ridge; fake-like ones
//! keep the contrast constant and lose more energy above a cutoff frequency.
//! Both classes are attenuated there by a per-impression gain, with
//! overlapping ranges, so the spectrum alone does not fully separate them.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::imgproc::{FloatImage, GrayImage};
use crate::nn::train::{mix, LABEL_FAKE, LABEL_REAL};
use crate::par;
use crate::spectrum::{fft2_bins, ifft2_real, normalized_radius};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthClass {
    Real,
    Fake,
}

impl SynthClass {
    pub fn label(self) -> usize {
        match self {
            SynthClass::Real => LABEL_REAL,
            SynthClass::Fake => LABEL_FAKE,
        }
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            SynthClass::Real => "real",
            SynthClass::Fake => "fake",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    /// Ridge period in pixels.
    pub period: f64,
    pub background: f64,
    pub ridge_depth: f64,
    /// Peak fraction of the ridge-valley contrast removed by the along-ridge
    /// variation of real impressions; fakes sit at half of it.
    pub modulation: f64,
    /// Pores per 1000 pixels.
    pub pore_density: f64,
    pub noise_sigma: f64,
    /// Normalized radius (1 = axis Nyquist) where fake attenuation starts.
    pub hf_cutoff: f64,
    /// Width of the cosine taper after the cutoff.
    pub hf_taper: f64,
    /// Range of the magnitude gain applied beyond the taper to fakes; each
    /// impression draws its gain log-uniformly from it.
    pub fake_hf_gain: [f64; 2],
    /// Same for reals, modelling capture devices of varying sharpness.
    pub real_hf_gain: [f64; 2],
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            period: 9.0,
            background: 205.0,
            ridge_depth: 150.0,
            modulation: 0.6,
            pore_density: 2.0,
            noise_sigma: 4.0,
            hf_cutoff: 0.3,
            hf_taper: 0.1,
            fake_hf_gain: [0.02, 0.2],
            real_hf_gain: [0.05, 1.0],
        }
    }
}

/// Geometry shared by every impression of one finger or masterprint.
struct Identity {
    core: (f64, f64),
    warp: Vec<(f64, f64, f64, f64)>,
    pores: Vec<(f64, f64)>,
    ridge_seed: u64,
}

impl Identity {
    fn new(seed: u64, w: usize, h: usize, params: &SynthParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (fw, fh) = (w as f64, h as f64);
        let core = (rng.gen_range(0.3..0.7) * fw, rng.gen_range(0.3..0.7) * fh);
        let warp = (0..3)
            .map(|_| {
                let amp = rng.gen_range(2.0..6.0);
                let wavelength = rng.gen_range(50.0..130.0);
                let dir: f64 = rng.gen_range(0.0..PI);
                let k = 2.0 * PI / wavelength;
                (amp, k * dir.cos(), k * dir.sin(), rng.gen_range(0.0..2.0 * PI))
            })
            .collect();
        let count = (fw * fh * params.pore_density / 1000.0).round() as usize;
        let pores = (0..count).map(|_| (rng.gen_range(0.0..fw), rng.gen_range(0.0..fh))).collect();
        Self { core, warp, pores, ridge_seed: rng.gen() }
    }

    fn phi(&self, x: f64, y: f64) -> f64 {
        let base = (x - self.core.0).hypot(y - self.core.1);
        base + self.warp.iter().map(|(a, kx, ky, p)| a * (kx * x + ky * y + p).sin()).sum::<f64>()
    }

    /// Wavelength and phase of the along-ridge modulation of ridge `k`.
    fn ridge_wave(&self, k: i64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.ridge_seed, k as u64));
        (rng.gen_range(14.0..36.0), rng.gen_range(0.0..2.0 * PI))
    }
}

fn hf_gain(r: f64, p: &SynthParams, gain: f64) -> f64 {
    if r <= p.hf_cutoff {
        1.0
    } else if r >= p.hf_cutoff + p.hf_taper {
        gain
    } else {
        let t = (r - p.hf_cutoff) / p.hf_taper;
        gain + (1.0 - gain) * 0.5 * (1.0 + (PI * t).cos())
    }
}

fn log_uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo >= hi {
        lo
    } else {
        (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp()
    }
}

/// Scales FFT magnitudes by a radial gain that is `gain` at high frequencies.
fn attenuate_high_freq(img: &FloatImage, p: &SynthParams, gain: f64) -> FloatImage {
    if gain == 1.0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let mut bins = fft2_bins(img);
    for v in 0..h {
        for u in 0..w {
            bins[v * w + u] *= hf_gain(normalized_radius(u, v, w, h), p, gain);
        }
    }
    ifft2_real(&bins, w, h)
}

/// One impression of the identity seeded by `identity_seed`.
pub fn synth_impression(
    identity_seed: u64,
    impression: u64,
    class: SynthClass,
    width: usize,
    height: usize,
    params: &SynthParams,
) -> GrayImage {
    let id = Identity::new(identity_seed, width, height, params);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(identity_seed, impression.wrapping_add(1)));
    let shift = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
    let p = params;
    let mut img = FloatImage::from_fn(width, height, |x, y| {
        let (fx, fy) = (x as f64 - shift.0, y as f64 - shift.1);
        let phi = id.phi(fx, fy);
        let ridge = 0.5 + 0.5 * (2.0 * PI * phi / p.period).cos();
        let contrast = match class {
            SynthClass::Real => {
                let k = (phi / p.period).round() as i64;
                let (lambda, phase) = id.ridge_wave(k);
                let arc = (fy - id.core.1).atan2(fx - id.core.0) * phi.max(p.period);
                1.0 - p.modulation * (0.5 + 0.5 * (2.0 * PI * arc / lambda + phase).sin())
            }
            SynthClass::Fake => 1.0 - p.modulation * 0.5,
        };
        // contrast varies around a fixed local mean, so modulation adds no baseband energy
        p.background - p.ridge_depth * (0.5 + (ridge - 0.5) * contrast)
    });
    for &(px, py) in &id.pores {
        let (cx, cy) = (px + shift.0, py + shift.1);
        let ridge = 0.5 + 0.5 * (2.0 * PI * id.phi(px, py) / p.period).cos();
        if ridge < 0.8 {
            continue;
        }
        let (x0, x1) = ((cx - 3.0).max(0.0) as usize, ((cx + 3.0) as usize).min(width - 1));
        let (y0, y1) = ((cy - 3.0).max(0.0) as usize, ((cy + 3.0) as usize).min(height - 1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                let v = img.get(x, y);
                img.set(x, y, v + (p.background - v) * 0.8 * (-d2 / (2.0 * 0.8 * 0.8)).exp());
            }
        }
    }
    if p.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, p.noise_sigma).expect("finite sigma");
        for v in img.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let range = match class {
        SynthClass::Real => p.real_hf_gain,
        SynthClass::Fake => p.fake_hf_gain,
    };
    let gain = log_uniform(&mut rng, range);
    img = attenuate_high_freq(&img, p, gain);
    img.to_gray_clamped()
}

/// A single image whose identity is derived from `seed`.
pub fn synth_fingerprint(seed: u64, class: SynthClass, width: usize, height: usize) -> GrayImage {
    synth_impression(mix(seed, class.label() as u64), 0, class, width, height, &SynthParams::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthCorpusSpec {
    pub identities_per_class: usize,
    pub impressions: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub params: SynthParams,
}

impl Default for SynthCorpusSpec {
    fn default() -> Self {
        Self { identities_per_class: 150, impressions: 2, width: 192, height: 192, seed: 0, params: SynthParams::default() }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSample {
    pub class: SynthClass,
    pub identity: String,
    pub impression: usize,
    pub image: GrayImage,
}

/// Real identities first, then fake ones; impressions in order.
pub fn synth_corpus(spec: &SynthCorpusSpec) -> Vec<SynthSample> {
    let jobs: Vec<(SynthClass, usize, usize)> = [SynthClass::Real, SynthClass::Fake]
        .into_iter()
        .flat_map(|c| {
            (0..spec.identities_per_class).flat_map(move |i| (0..spec.impressions).map(move |k| (c, i, k)))
        })
        .collect();
    par::map(&jobs, |&(class, i, k)| {
        let id_seed = mix(mix(spec.seed, class.label() as u64 + 11), i as u64);
        SynthSample {
            class,
            identity: format!("{}_{i:03}", class.dir_name()),
            impression: k,
            image: synth_impression(id_seed, k as u64, class, spec.width, spec.height, &spec.params),
        }
    })
}
