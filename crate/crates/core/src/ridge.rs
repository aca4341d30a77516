//! Ridge tracing, fixed-length segmentation and the averaged 1-D spectrum
//! of grayscale values sampled along ridges.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::enhance::{neighbor_groups, neighbor_mask, RING};
use crate::error::{Error, Result};
use crate::imgproc::{gaussian_smooth_1d, GrayImage, BLACK, WHITE};

pub const SEGMENT_LEN: usize = 128;

pub type Point = (usize, usize);

/// Ordered pixel path; consecutive points are 8-adjacent, none repeats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RidgeCurve {
    pub points: Vec<Point>,
}

impl RidgeCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Window of exactly `N` consecutive curve points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RidgeSegment {
    pub points: Vec<Point>,
}

/// Mean DFT magnitude of the per-segment signals.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRidgeFeature {
    pub values: Vec<f64>,
    pub segment_count: usize,
}

fn black_neighbors(work: &GrayImage, (x, y): Point) -> Vec<(usize, Point)> {
    RING.iter()
        .enumerate()
        .filter_map(|(k, (dx, dy))| {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            (work.get_checked(nx, ny) == Some(BLACK)).then_some((k, (nx as usize, ny as usize)))
        })
        .collect()
}

/// Edge-adjacent neighbors first (even ring slots), then ring order.
fn preferred(cands: &[(usize, Point)]) -> Option<Point> {
    cands.iter().find(|(k, _)| k % 2 == 0).or_else(|| cands.first()).map(|&(_, p)| p)
}

/// Follows the ridge from `start`, erasing every visited pixel.
fn walk(work: &mut GrayImage, start: Point, out: &mut Vec<Point>) {
    let mut cur = Some(start);
    while let Some(p) = cur {
        out.push(p);
        work.set(p.0, p.1, WHITE);
        cur = preferred(&black_neighbors(work, p));
    }
}

/// Traces the ridge through `seed`, erasing it from `work`.
///
/// When the seed has two neighbor groups the ridge is followed both ways and
/// joined as `reverse(first) + seed + second`.
pub fn trace_from(work: &mut GrayImage, seed: Point) -> RidgeCurve {
    work.set(seed.0, seed.1, WHITE);
    let cands = black_neighbors(work, seed);
    // split the seed's neighbors into ring runs
    let mut groups: Vec<Vec<(usize, Point)>> = Vec::new();
    if !cands.is_empty() {
        let in_mask = |k: usize| cands.iter().any(|&(j, _)| j == k % 8);
        let start = (0..8).find(|&k| in_mask(k) && !in_mask(k + 7)).unwrap_or(0);
        for step in 0..8 {
            let k = (start + step) % 8;
            if !in_mask(k) {
                continue;
            }
            let entry = *cands.iter().find(|&&(j, _)| j == k).expect("in mask");
            if step > 0 && in_mask(k + 7) {
                groups.last_mut().expect("open group").push(entry);
            } else {
                groups.push(vec![entry]);
            }
        }
    }
    let mut first = Vec::new();
    let mut second = Vec::new();
    if let Some(p) = groups.first().and_then(|g| preferred(g)) {
        walk(work, p, &mut first);
    }
    if let Some(p) = groups.get(1).and_then(|g| preferred(g)) {
        if work.get(p.0, p.1) == BLACK {
            walk(work, p, &mut second);
        }
    }
    let mut points: Vec<Point> = first.into_iter().rev().collect();
    points.push(seed);
    points.extend(second);
    RidgeCurve { points }
}

/// Partitions the black pixels of a branch-free skeleton into ordered curves,
/// seeding each at the first remaining black pixel in row-major order.
pub fn trace_all_ridges(skel: &GrayImage) -> Result<Vec<RidgeCurve>> {
    skel.check_binary()?;
    for y in 0..skel.height() {
        for x in 0..skel.width() {
            if skel.get(x, y) == BLACK && neighbor_groups(neighbor_mask(skel, x, y)) >= 3 {
                return Err(Error::BranchPoint { x, y });
            }
        }
    }
    let mut work = skel.clone();
    let mut curves = Vec::new();
    let w = work.width();
    let mut cursor = 0;
    while let Some(off) = work.data()[cursor..].iter().position(|&v| v == BLACK) {
        let idx = cursor + off;
        curves.push(trace_from(&mut work, (idx % w, idx / w)));
        cursor = idx;
    }
    Ok(curves)
}

/// Non-overlapping windows of `n` points from each curve head; remainders
/// shorter than `n` are dropped.
pub fn segment_curves(curves: &[RidgeCurve], n: usize) -> Vec<RidgeSegment> {
    assert!(n >= 2, "segment length must be at least 2");
    curves
        .iter()
        .flat_map(|c| c.points.chunks_exact(n).map(|w| RidgeSegment { points: w.to_vec() }))
        .collect()
}

/// Original grayscale values along the segment.
pub fn sample_signal(original: &GrayImage, seg: &RidgeSegment) -> Result<Vec<f64>> {
    seg.points
        .iter()
        .map(|&(x, y)| {
            if x >= original.width() || y >= original.height() {
                Err(Error::OutOfBounds { x, y, width: original.width(), height: original.height() })
            } else {
                Ok(original.get(x, y) as f64)
            }
        })
        .collect()
}

/// Mean over segments of `|DFT|` of the smoothed along-ridge signal.
/// `sigma == 0` disables smoothing.
pub fn raw_ridge_feature(
    original: &GrayImage,
    segments: &[RidgeSegment],
    sigma: f64,
) -> Result<RawRidgeFeature> {
    let signals = segments
        .iter()
        .map(|seg| sample_signal(original, seg))
        .collect::<Result<Vec<_>>>()?;
    mean_dft_magnitude(&signals, sigma)
}

/// Element-wise mean of `|DFT|` over equal-length signals, each smoothed
/// first unless `sigma == 0`.
pub fn mean_dft_magnitude(signals: &[Vec<f64>], sigma: f64) -> Result<RawRidgeFeature> {
    let n = signals.first().ok_or(Error::NoRidges)?.len();
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut acc = vec![0.0; n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for signal in signals {
        if signal.len() != n {
            return Err(Error::dims(n, signal.len()));
        }
        let smoothed;
        let signal = if sigma > 0.0 {
            smoothed = gaussian_smooth_1d(signal, sigma)?;
            &smoothed
        } else {
            signal
        };
        for (b, s) in buf.iter_mut().zip(signal) {
            *b = Complex64::new(*s, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm();
        }
    }
    let m = signals.len() as f64;
    acc.iter_mut().for_each(|v| *v /= m);
    Ok(RawRidgeFeature { values: acc, segment_count: signals.len() })
}
