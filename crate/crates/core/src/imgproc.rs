//! Raster types and the elementary filters shared by every stage.
//!
//! Intensities follow the fingerprint convention: 0 is ink (ridge), 255 is
//! background.

use std::path::Path;

use crate::error::{Error, Result};

pub const BLACK: u8 = 0;
pub const WHITE: u8 = 255;

/// 8-bit single-channel raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidDimensions { width, height, len: data.len() });
        }
        Ok(Self { width, height, data })
    }

    /// Panics on zero dimensions.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    /// Pixel, or `None` outside the raster.
    #[inline]
    pub fn get_checked(&self, x: isize, y: isize) -> Option<u8> {
        if x < 0 || y < 0 || x >= self.width as isize || y >= self.height as isize {
            None
        } else {
            Some(self.data[y as usize * self.width + x as usize])
        }
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == BLACK || v == WHITE)
    }

    pub(crate) fn check_binary(&self) -> Result<()> {
        match self.data.iter().find(|&&v| v != BLACK && v != WHITE) {
            Some(&v) => Err(Error::NotBinary(v)),
            None => Ok(()),
        }
    }

    pub fn count_black(&self) -> usize {
        self.data.iter().filter(|&&v| v == BLACK).count()
    }

    pub fn to_float(&self) -> FloatImage {
        FloatImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> GrayImage {
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.width) {
            row.reverse();
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::io::read_gray(path.as_ref())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_gray(self, path.as_ref())
    }
}

/// Real-valued raster used for enhancement intermediates and spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidDimensions { width, height, len: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Rounds and clamps to `[0, 255]`.
    pub fn to_gray_clamped(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| to_u8(v)).collect(),
        }
    }

    /// Min-max stretch to `[0, 255]`. A flat image maps to white.
    pub fn to_gray_normalized(&self) -> GrayImage {
        let (lo, hi) = min_max(&self.data);
        let span = hi - lo;
        let data = if !(span > 1e-12) {
            vec![WHITE; self.data.len()]
        } else {
            self.data.iter().map(|&v| to_u8((v - lo) / span * 255.0)).collect()
        };
        GrayImage { width: self.width, height: self.height, data }
    }
}

#[inline]
pub(crate) fn to_u8(v: f64) -> u8 {
    if v.is_nan() {
        0
    } else {
        v.round().clamp(0.0, 255.0) as u8
    }
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

pub fn mean_std(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for v in values {
        n += 1;
        sum += v;
        sum2 += v * v;
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    (mean, (sum2 / n as f64 - mean * mean).max(0.0).sqrt())
}

/// Median over a `(2r+1)^2` window with edge replication.
pub fn median_filter(img: &GrayImage, radius: usize) -> GrayImage {
    let r = radius.max(1) as isize;
    let side = (2 * r + 1) as usize;
    let mid = side * side / 2;
    let mut window = Vec::with_capacity(side * side);
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            window.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    window.push(img.get_clamped(x as isize + dx, y as isize + dy));
                }
            }
            let (_, m, _) = window.select_nth_unstable(mid);
            out.set(x, y, *m);
        }
    }
    out
}

/// Discrete Gaussian truncated at `ceil(3 sigma)` and normalized to unit sum.
pub fn gaussian_kernel_1d(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// 1-D Gaussian smoothing with edge replication.
pub fn gaussian_smooth_1d(signal: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let kernel = gaussian_kernel_1d(sigma);
    let radius = (kernel.len() / 2) as isize;
    let last = signal.len() as isize - 1;
    Ok((0..signal.len() as isize)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * signal[(i + k as isize - radius).clamp(0, last) as usize])
                .sum()
        })
        .collect())
}

/// Ridge pixels (`< threshold`) become 0, everything else 255.
pub fn threshold_binarize(img: &GrayImage, threshold: u8) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&v| if v < threshold { BLACK } else { WHITE }).collect(),
    }
}

/// Centered crop along axes where the input is larger, centered padding
/// (with `fill`) where it is smaller.
pub fn center_crop_or_pad(img: &GrayImage, out_w: usize, out_h: usize, fill: u8) -> GrayImage {
    assert!(out_w > 0 && out_h > 0, "output dimensions must be positive");
    // (source offset, destination offset, copied extent) per axis
    fn axis(input: usize, output: usize) -> (usize, usize, usize) {
        if input >= output {
            ((input - output) / 2, 0, output)
        } else {
            (0, (output - input) / 2, input)
        }
    }
    let (sx, dx, w) = axis(img.width, out_w);
    let (sy, dy, h) = axis(img.height, out_h);
    let mut out = GrayImage::filled(out_w, out_h, fill);
    for row in 0..h {
        let src = (sy + row) * img.width + sx;
        let dst = (dy + row) * out_w + dx;
        out.data[dst..dst + w].copy_from_slice(&img.data[src..src + w]);
    }
    out
}
