//! 2-D spectra: complex FFT, log-magnitude planes, orthonormal DCT-II,
//! corpus means and difference maps.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{min_max, to_u8, FloatImage, GrayImage};

pub const LOG_EPSILON: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    FftLogmag,
    FftComplex,
    DctLogmag,
}

/// Frequency plane. Complex planes store interleaved `(re, im)` pairs, so
/// `values.len()` is `2 * width * height` for them and `width * height`
/// otherwise. Index `(u, v)` is column `u`, row `v`; no DC centering.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2D {
    pub width: usize,
    pub height: usize,
    pub kind: SpectrumKind,
    pub values: Vec<f64>,
}

impl Spectrum2D {
    pub fn new(width: usize, height: usize, kind: SpectrumKind, values: Vec<f64>) -> Result<Self> {
        let per = if kind == SpectrumKind::FftComplex { 2 } else { 1 };
        if width == 0 || height == 0 || values.len() != per * width * height {
            return Err(Error::InvalidDimensions { width, height, len: values.len() });
        }
        Ok(Self { width, height, kind, values })
    }

    pub fn from_complex(width: usize, height: usize, bins: &[Complex64]) -> Self {
        debug_assert_eq!(bins.len(), width * height);
        let values = bins.iter().flat_map(|c| [c.re, c.im]).collect();
        Self { width, height, kind: SpectrumKind::FftComplex, values }
    }

    pub fn complex_bins(&self) -> Vec<Complex64> {
        assert_eq!(self.kind, SpectrumKind::FftComplex, "not a complex spectrum");
        self.values.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
    }

    pub fn bin(&self, u: usize, v: usize) -> Complex64 {
        assert_eq!(self.kind, SpectrumKind::FftComplex, "not a complex spectrum");
        let i = 2 * (v * self.width + u);
        Complex64::new(self.values[i], self.values[i + 1])
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        assert_ne!(self.kind, SpectrumKind::FftComplex, "complex spectrum has no scalar bins");
        self.values[v * self.width + u]
    }

    pub fn check_same(&self, other: &Spectrum2D) -> Result<()> {
        if (self.width, self.height, self.kind) != (other.width, other.height, other.kind) {
            return Err(Error::dims(
                format!("{}x{} {:?}", self.width, self.height, self.kind),
                format!("{}x{} {:?}", other.width, other.height, other.kind),
            ));
        }
        Ok(())
    }

    /// Swaps quadrants so DC sits at `(w/2, h/2)`. Display only.
    pub fn fftshift(&self) -> Spectrum2D {
        assert_ne!(self.kind, SpectrumKind::FftComplex, "shift the magnitude plane instead");
        let (w, h) = (self.width, self.height);
        let mut values = vec![0.0; w * h];
        for v in 0..h {
            for u in 0..w {
                values[((v + h / 2) % h) * w + (u + w / 2) % w] = self.values[v * w + u];
            }
        }
        Spectrum2D { width: w, height: h, kind: self.kind, values }
    }

    /// Min-max stretched 8-bit rendering plus the `(min, max)` it maps from.
    pub fn to_heatmap(&self, center: bool) -> (GrayImage, f64, f64) {
        let plane = if center { self.fftshift() } else { self.clone() };
        let (lo, hi) = min_max(&plane.values);
        let span = hi - lo;
        let data = plane
            .values
            .iter()
            .map(|&v| if span > 0.0 { to_u8((v - lo) / span * 255.0) } else { 0 })
            .collect();
        (GrayImage::new(self.width, self.height, data).expect("same dims"), lo, hi)
    }

    /// Log-magnitude plane mirrored along x (`u -> (W - u) mod W`), which is
    /// exactly the log-magnitude of the horizontally flipped image.
    pub fn mirror_u(&self) -> Spectrum2D {
        assert_eq!(self.kind, SpectrumKind::FftLogmag, "mirror applies to FFT magnitudes");
        let (w, h) = (self.width, self.height);
        let mut values = vec![0.0; w * h];
        for v in 0..h {
            for u in 0..w {
                values[v * w + (w - u) % w] = self.values[v * w + u];
            }
        }
        Spectrum2D { width: w, height: h, kind: self.kind, values }
    }
}

/// In-place 2-D DFT over a row-major complex buffer.
pub(crate) fn fft2_inplace(buf: &mut [Complex64], width: usize, height: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    for row in buf.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); height];
    for u in 0..width {
        for v in 0..height {
            col[v] = buf[v * width + u];
        }
        col_fft.process(&mut col);
        for v in 0..height {
            buf[v * width + u] = col[v];
        }
    }
    if inverse {
        let scale = 1.0 / (width * height) as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }
}

pub fn fft2_bins(img: &FloatImage) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_inplace(&mut buf, img.width(), img.height(), false);
    buf
}

/// Unnormalized forward 2-D DFT.
pub fn fft2(img: &FloatImage) -> Spectrum2D {
    Spectrum2D::from_complex(img.width(), img.height(), &fft2_bins(img))
}

/// Inverse of [`fft2_bins`] (with the `1/MN` factor), real part only.
pub fn ifft2_real(bins: &[Complex64], width: usize, height: usize) -> FloatImage {
    let mut buf = bins.to_vec();
    fft2_inplace(&mut buf, width, height, true);
    FloatImage::new(width, height, buf.iter().map(|c| c.re).collect()).expect("same dims")
}

/// `ln(|X| + epsilon)` per bin.
pub fn log_magnitude(spec: &Spectrum2D, epsilon: f64) -> Spectrum2D {
    assert_eq!(spec.kind, SpectrumKind::FftComplex, "log_magnitude expects a complex spectrum");
    let values = spec.values.chunks_exact(2).map(|c| (c[0].hypot(c[1]) + epsilon).ln()).collect();
    Spectrum2D { width: spec.width, height: spec.height, kind: SpectrumKind::FftLogmag, values }
}

/// Log-magnitude FFT spectrum of a grayscale image.
pub fn fft_logmag(img: &GrayImage, epsilon: f64) -> Spectrum2D {
    log_magnitude(&fft2(&img.to_float()), epsilon)
}

fn dct_basis(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            m[k * n + i] = scale * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    m
}

/// Orthonormal separable DCT-II coefficients, row-major `(u, v)` layout.
pub fn dct2(img: &FloatImage) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let bw = dct_basis(w);
    let bh = dct_basis(h);
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        let src = &img.data()[y * w..][..w];
        for u in 0..w {
            rows[y * w + u] = bw[u * w..][..w].iter().zip(src).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for v in 0..h {
        let basis = &bh[v * h..][..h];
        for u in 0..w {
            out[v * w + u] = (0..h).map(|y| basis[y] * rows[y * w + u]).sum();
        }
    }
    out
}

pub fn dct2_log(img: &FloatImage, epsilon: f64) -> Spectrum2D {
    let values = dct2(img).into_iter().map(|c| (c.abs() + epsilon).ln()).collect();
    Spectrum2D { width: img.width(), height: img.height(), kind: SpectrumKind::DctLogmag, values }
}

/// Log-magnitude spectrum of the requested kind.
pub fn log_spectrum(img: &GrayImage, kind: SpectrumKind, epsilon: f64) -> Result<Spectrum2D> {
    match kind {
        SpectrumKind::FftLogmag => Ok(fft_logmag(img, epsilon)),
        SpectrumKind::DctLogmag => Ok(dct2_log(&img.to_float(), epsilon)),
        SpectrumKind::FftComplex => {
            Err(Error::InvalidParameter("mean spectra are taken over log-magnitude planes".into()))
        }
    }
}

/// Running sum of log-magnitude planes. Partial accumulators merge, so a
/// corpus can be sharded.
#[derive(Debug, Clone)]
pub struct SpectrumAccumulator {
    kind: SpectrumKind,
    epsilon: f64,
    dims: Option<(usize, usize)>,
    sum: Vec<f64>,
    count: usize,
}

impl SpectrumAccumulator {
    pub fn new(kind: SpectrumKind, epsilon: f64) -> Self {
        Self { kind, epsilon, dims: None, sum: Vec::new(), count: 0 }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn add_image(&mut self, img: &GrayImage) -> Result<()> {
        self.check_dims(img.width(), img.height())?;
        let spec = log_spectrum(img, self.kind, self.epsilon)?;
        self.add_spectrum(&spec)
    }

    pub fn add_spectrum(&mut self, spec: &Spectrum2D) -> Result<()> {
        if spec.kind != self.kind {
            return Err(Error::dims(format!("{:?}", self.kind), format!("{:?}", spec.kind)));
        }
        self.check_dims(spec.width, spec.height)?;
        if self.sum.is_empty() {
            self.sum = vec![0.0; spec.values.len()];
        }
        self.sum.iter_mut().zip(&spec.values).for_each(|(a, b)| *a += b);
        self.count += 1;
        Ok(())
    }

    fn check_dims(&mut self, w: usize, h: usize) -> Result<()> {
        match self.dims {
            Some(d) if d != (w, h) => Err(Error::dims(format!("{}x{}", d.0, d.1), format!("{w}x{h}"))),
            Some(_) => Ok(()),
            None => {
                self.dims = Some((w, h));
                Ok(())
            }
        }
    }

    pub fn merge(&mut self, other: SpectrumAccumulator) -> Result<()> {
        if other.count == 0 {
            return Ok(());
        }
        let (w, h) = other.dims.expect("non-empty accumulator has dims");
        self.check_dims(w, h)?;
        if self.sum.is_empty() {
            self.sum = vec![0.0; other.sum.len()];
        }
        self.sum.iter_mut().zip(&other.sum).for_each(|(a, b)| *a += b);
        self.count += other.count;
        Ok(())
    }

    pub fn finish(self) -> Result<Spectrum2D> {
        let (w, h) = self.dims.filter(|_| self.count > 0).ok_or(Error::EmptyCorpus)?;
        let n = self.count as f64;
        let values = self.sum.into_iter().map(|s| s / n).collect();
        Spectrum2D::new(w, h, self.kind, values)
    }
}

/// Element-wise mean of per-image log-magnitude spectra.
pub fn mean_spectrum<'a, I>(images: I, kind: SpectrumKind, epsilon: f64) -> Result<Spectrum2D>
where
    I: IntoIterator<Item = &'a GrayImage>,
{
    let mut acc = SpectrumAccumulator::new(kind, epsilon);
    for img in images {
        acc.add_image(img)?;
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffStats {
    pub l2: f64,
    pub max_abs: f64,
    pub mean: f64,
}

/// `a - b` per bin with summary statistics.
pub fn spectrum_diff(a: &Spectrum2D, b: &Spectrum2D) -> Result<(Spectrum2D, DiffStats)> {
    a.check_same(b)?;
    let values: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    let l2 = values.iter().map(|d| d * d).sum::<f64>().sqrt();
    let max_abs = values.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok((Spectrum2D { values, ..a.clone() }, DiffStats { l2, max_abs, mean }))
}

/// Signed distance of bin index `k` from DC along an axis of length `n`.
#[inline]
pub fn centered_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Radius of bin `(u, v)` relative to Nyquist, `0` at DC and `1` at the
/// axis-aligned Nyquist frequency.
pub fn normalized_radius(u: usize, v: usize, width: usize, height: usize) -> f64 {
    let fu = centered_freq(u, width) / (width as f64 / 2.0);
    let fv = centered_freq(v, height) / (height as f64 / 2.0);
    fu.hypot(fv)
}

/// Mean log-magnitude over bins whose normalized radius exceeds `cutoff`.
pub fn high_freq_mean(spec: &Spectrum2D, cutoff: f64) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in 0..spec.height {
        for u in 0..spec.width {
            if normalized_radius(u, v, spec.width, spec.height) > cutoff {
                sum += spec.get(u, v);
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
