//! Block orientation field and orientation-tuned Gabor enhancement.

use std::f64::consts::PI;

use crate::imgproc::{FloatImage, GrayImage};

/// Per-block ridge direction in `[0, pi)`, measured from the +x axis with
/// image y pointing down, plus a gradient-coherence score in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationField {
    pub block_size: usize,
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub angles: Vec<f64>,
    pub coherence: Vec<f64>,
}

impl OrientationField {
    pub fn angle_at_block(&self, bx: usize, by: usize) -> f64 {
        self.angles[by * self.blocks_x + bx]
    }

    pub fn coherence_at_block(&self, bx: usize, by: usize) -> f64 {
        self.coherence[by * self.blocks_x + bx]
    }

    pub fn angle_at_pixel(&self, x: usize, y: usize) -> f64 {
        self.angle_at_block(x / self.block_size, y / self.block_size)
    }
}

fn sobel(img: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width(), img.height());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = |dx: isize, dy: isize| img.get_clamped(x as isize + dx, y as isize + dy) as f64;
            gx[y * w + x] = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            gy[y * w + x] = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
        }
    }
    (gx, gy)
}

/// Doubled-angle averaging of squared gradients over each block.
pub fn estimate_orientation(img: &GrayImage, block_size: usize) -> OrientationField {
    let block_size = block_size.max(4);
    let (w, h) = (img.width(), img.height());
    let (gx, gy) = sobel(img);
    let blocks_x = w.div_ceil(block_size);
    let blocks_y = h.div_ceil(block_size);
    let mut angles = Vec::with_capacity(blocks_x * blocks_y);
    let mut coherence = Vec::with_capacity(blocks_x * blocks_y);
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let (mut gxx, mut gxy, mut energy) = (0.0, 0.0, 0.0);
            for y in by * block_size..((by + 1) * block_size).min(h) {
                for x in bx * block_size..((bx + 1) * block_size).min(w) {
                    let (a, b) = (gx[y * w + x], gy[y * w + x]);
                    gxx += a * a - b * b;
                    gxy += 2.0 * a * b;
                    energy += a * a + b * b;
                }
            }
            if energy <= 1e-9 {
                angles.push(0.0);
                coherence.push(0.0);
                continue;
            }
            // dominant gradient direction; ridges run perpendicular to it
            let grad = 0.5 * gxy.atan2(gxx);
            angles.push((grad + PI / 2.0).rem_euclid(PI));
            coherence.push(((gxx * gxx + gxy * gxy).sqrt() / energy).clamp(0.0, 1.0));
        }
    }
    OrientationField { block_size, blocks_x, blocks_y, angles, coherence }
}

pub const GABOR_SIGMA: f64 = 4.0;

/// Even-symmetric Gabor kernel with zero mean. `angle` is the ridge
/// direction; the cosine carrier runs across it.
pub fn gabor_kernel(angle: f64, freq: f64, sigma: f64) -> (usize, Vec<f64>) {
    let half = (2.0 * sigma).ceil() as isize;
    let side = (2 * half + 1) as usize;
    let (s, c) = angle.sin_cos();
    let mut k = Vec::with_capacity(side * side);
    for dy in -half..=half {
        for dx in -half..=half {
            let (fx, fy) = (dx as f64, dy as f64);
            let across = -fx * s + fy * c;
            let env = (-(fx * fx + fy * fy) / (2.0 * sigma * sigma)).exp();
            k.push(env * (2.0 * PI * freq * across).cos());
        }
    }
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.iter_mut().for_each(|v| *v -= mean);
    (half as usize, k)
}

/// Filters every pixel with the Gabor kernel of its block and stretches the
/// response to `[0, 255]`. Dark ridges stay dark.
pub fn gabor_enhance(img: &GrayImage, field: &OrientationField, ridge_freq: f64) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let kernels: Vec<(usize, Vec<f64>)> =
        field.angles.iter().map(|&a| gabor_kernel(a, ridge_freq, GABOR_SIGMA)).collect();
    let mut out = FloatImage::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let block = (y / field.block_size) * field.blocks_x + x / field.block_size;
            let (half, k) = &kernels[block];
            let half = *half as isize;
            let side = (2 * half + 1) as usize;
            let mut acc = 0.0;
            for dy in -half..=half {
                let row = &k[(dy + half) as usize * side..][..side];
                let yy = y as isize + dy;
                for (i, &kv) in row.iter().enumerate() {
                    acc += kv * img.get_clamped(x as isize + i as isize - half, yy) as f64;
                }
            }
            out.set(x, y, acc);
        }
    }
    out.to_gray_normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgproc::mean_std;

    fn stripes(w: usize, h: usize, angle: f64, period: f64, amp: f64) -> GrayImage {
        let (s, c) = angle.sin_cos();
        GrayImage::from_fn(w, h, |x, y| {
            let across = -(x as f64) * s + y as f64 * c;
            (128.0 + amp * (2.0 * PI * across / period).cos()).round() as u8
        })
    }

    fn angle_err(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(PI);
        d.min(PI - d)
    }

    #[test]
    fn vertical_stripes_give_vertical_ridges() {
        let img = GrayImage::from_fn(64, 64, |x, _| (128.0 + 80.0 * (2.0 * PI * x as f64 / 9.0).sin()) as u8);
        let f = estimate_orientation(&img, 16);
        assert_eq!((f.blocks_x, f.blocks_y), (4, 4));
        for (a, c) in f.angles.iter().zip(&f.coherence) {
            assert!(angle_err(*a, PI / 2.0) < 0.05, "angle {a}");
            assert!(*c > 0.9, "coherence {c}");
        }
    }

    #[test]
    fn diagonal_stripes() {
        let img = stripes(64, 64, PI / 4.0, 9.0, 80.0);
        let f = estimate_orientation(&img, 16);
        for a in &f.angles {
            assert!(angle_err(*a, PI / 4.0) < 0.1, "angle {a}");
        }
    }

    #[test]
    fn constant_has_zero_coherence() {
        let f = estimate_orientation(&GrayImage::filled(40, 33, 90), 8);
        assert_eq!((f.blocks_x, f.blocks_y), (5, 5));
        assert!(f.coherence.iter().all(|&c| c == 0.0));
        assert!(f.angles.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn kernel_is_zero_mean() {
        let (_, k) = gabor_kernel(0.7, 0.1, 4.0);
        assert!(k.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn constant_stays_constant() {
        let img = GrayImage::filled(32, 32, 77);
        let f = estimate_orientation(&img, 16);
        let out = gabor_enhance(&img, &f, 0.1);
        let v = out.get(0, 0);
        assert!(out.data().iter().all(|&p| p == v));
    }

    #[test]
    fn contrast_increases() {
        let img = stripes(64, 64, 0.3, 10.0, 40.0);
        let f = estimate_orientation(&img, 16);
        let out = gabor_enhance(&img, &f, 0.1);
        let (_, s_in) = mean_std(img.data().iter().map(|&v| v as f64));
        let (_, s_out) = mean_std(out.data().iter().map(|&v| v as f64));
        assert!(s_out >= s_in, "{s_out} < {s_in}");
    }

    #[test]
    fn off_frequency_noise_suppressed() {
        let clean = stripes(64, 64, 1.1, 10.0, 100.0);
        // checkerboard-like high-frequency disturbance
        let noisy = GrayImage::from_fn(64, 64, |x, y| {
            let n = if (x + y) % 2 == 0 { 25.0 } else { -25.0 } + if (x / 2 + y) % 3 == 0 { 10.0 } else { -5.0 };
            (clean.get(x, y) as f64 + n).clamp(0.0, 255.0) as u8
        });
        let field = estimate_orientation(&noisy, 16);
        let out = gabor_enhance(&noisy, &field, 0.1);
        // compare away from the border where edge replication distorts phase
        let dist = |a: &GrayImage, b: &GrayImage| -> f64 {
            let mut s = 0.0;
            for y in 8..56 {
                for x in 8..56 {
                    let d = a.get(x, y) as f64 - b.get(x, y) as f64;
                    s += d * d;
                }
            }
            s.sqrt()
        };
        let clean_stretched = {
            let f = clean.to_float();
            f.to_gray_normalized()
        };
        assert!(dist(&out, &clean_stretched) < dist(&noisy, &clean_stretched));
    }
}
