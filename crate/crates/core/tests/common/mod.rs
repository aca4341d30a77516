//! Brute-force oracles shared by the integration tests. Everything here is
//! written from the definitions, without calling the code under test.
#![allow(dead_code)]

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfdfin_core::imgproc::{FloatImage, GrayImage};
use rfdfin_core::nn::{Ctx, Layer, ParamKind, Tensor};

pub const BLACK: u8 = 0;
pub const WHITE: u8 = 255;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Fourier transforms

/// `sum_n x[n] e^{-2 pi i k n / N}` as `(re, im)`.
pub fn naive_dft1(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
                let a = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                (re + v * a.cos(), im + v * a.sin())
            })
        })
        .collect()
}

/// Double-sum 2-D DFT, row-major bins `(u, v)` at `v * W + u`.
pub fn naive_dft2(img: &FloatImage) -> Vec<(f64, f64)> {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let a = -2.0 * PI * (((u * x) % w) as f64 / w as f64 + ((v * y) % h) as f64 / h as f64);
                    let p = img.get(x, y);
                    re += p * a.cos();
                    im += p * a.sin();
                }
            }
            out.push((re, im));
        }
    }
    out
}

/// `||a - b|| / ||b||` over complex vectors; `0` when both vanish.
pub fn rel_err_complex(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num: f64 = a.iter().zip(b).map(|(p, q)| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sum();
    let den: f64 = b.iter().map(|q| q.0 * q.0 + q.1 * q.1).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

pub fn random_float_image(r: &mut ChaCha8Rng, max_side: usize) -> FloatImage {
    let w = r.gen_range(1..=max_side);
    let h = r.gen_range(1..=max_side);
    FloatImage::from_fn(w, h, |_, _| r.gen_range(-1.0..1.0) * 255.0)
}

// ---------------------------------------------------------------------------
// Layer gradients

/// Central-difference check of a layer. The loss is `sum(y * g)` with a
/// fixed random `g`; every forward reseeds dropout so the mask is the same.
/// Returns the largest norm-wise relative error over the input gradient and
/// every trainable parameter gradient.
pub fn grad_check(layer: &mut dyn Layer, x: &Tensor, seed: u64, h: f32) -> f64 {
    let y = layer.forward(x, &mut Ctx::train(seed)).expect("forward");
    let mut r = rng(seed ^ 0x5EED);
    let g: Vec<f32> = (0..y.numel()).map(|_| r.gen_range(-1.0..1.0)).collect();
    let g_t = Tensor::new(y.shape(), g.clone()).unwrap();

    layer.visit("", &mut |_, t, _| t.zero_grad());
    layer.forward(x, &mut Ctx::train(seed)).unwrap();
    let dx = layer.backward(&g_t).expect("backward");

    let loss = |layer: &mut dyn Layer, x: &Tensor| -> f64 {
        let y = layer.forward(x, &mut Ctx::train(seed)).unwrap();
        y.data().iter().zip(&g).map(|(&a, &b)| a as f64 * b as f64).sum()
    };

    let mut worst = 0.0f64;
    let mut xp = x.clone();
    let mut numeric = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + h;
        let lp = loss(layer, &xp);
        xp.data_mut()[i] = orig - h;
        let lm = loss(layer, &xp);
        xp.data_mut()[i] = orig;
        numeric.push((lp - lm) / (2.0 * h as f64));
    }
    worst = worst.max(rel_err(dx.data(), &numeric));

    let mut params: Vec<(String, Vec<f32>)> = Vec::new();
    layer.visit("", &mut |name, t, kind| {
        if kind == ParamKind::Trainable {
            params.push((name.to_string(), t.grad().map_or_else(|| vec![0.0; t.numel()], <[f32]>::to_vec)));
        }
    });
    for (name, analytic) in params {
        let mut numeric = Vec::with_capacity(analytic.len());
        for j in 0..analytic.len() {
            let nudge = |delta: f32, layer: &mut dyn Layer| {
                layer.visit("", &mut |n, t, _| {
                    if n == name {
                        t.data_mut()[j] += delta;
                    }
                });
            };
            nudge(h, layer);
            let lp = loss(layer, x);
            nudge(-2.0 * h, layer);
            let lm = loss(layer, x);
            nudge(h, layer);
            numeric.push((lp - lm) / (2.0 * h as f64));
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// `||a - n|| / max(||a||, ||n||)`; `0` when both vanish.
pub fn rel_err(analytic: &[f32], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(&a, &n)| (a as f64 - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Values drawn away from zero so a finite difference never crosses a kink.
pub fn away_from_zero(r: &mut ChaCha8Rng, n: usize, gap: f32) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let v: f32 = r.gen_range(gap..1.0);
            if r.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

/// Distinct values spaced `gap` apart in random order, so every pooling
/// window has a unique maximum with a margin.
pub fn distinct_values(r: &mut ChaCha8Rng, n: usize, gap: f32) -> Vec<f32> {
    let mut v: Vec<f32> = (0..n).map(|i| (i as f32 - n as f32 / 2.0) * gap).collect();
    v.shuffle(r);
    v
}

/// Zero-padded 3x3 convolution computed per output element.
pub fn naive_conv3x3(x: &[f32], b: usize, cin: usize, h: usize, w: usize, weight: &[f32], bias: &[f32]) -> Vec<f32> {
    let cout = bias.len();
    let mut out = vec![0.0f32; b * cout * h * w];
    for n in 0..b {
        for co in 0..cout {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = bias[co] as f64;
                    for ci in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (iy, ix) = (y as isize + ky as isize - 1, xx as isize + kx as isize - 1);
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let v = x[((n * cin + ci) * h + iy as usize) * w + ix as usize];
                                acc += v as f64 * weight[((co * cin + ci) * 3 + ky) * 3 + kx] as f64;
                            }
                        }
                    }
                    out[((n * cout + co) * h + y) * w + xx] = acc as f32;
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Binary images

pub fn random_binary(r: &mut ChaCha8Rng, w: usize, h: usize, p_black: f64) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| if r.gen_bool(p_black) { BLACK } else { WHITE })
}

fn black_at(img: &GrayImage, x: isize, y: isize) -> bool {
    x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() && img.get(x as usize, y as usize) == BLACK
}

/// Pore filling by direct count of the 24 surrounding pixels.
pub fn oracle_fill_pores(img: &GrayImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        if img.get(x, y) == BLACK {
            return BLACK;
        }
        let mut black = 0;
        for dy in -2isize..=2 {
            for dx in -2isize..=2 {
                if (dx, dy) != (0, 0) && black_at(img, x as isize + dx, y as isize + dy) {
                    black += 1;
                }
            }
        }
        if black > 15 {
            BLACK
        } else {
            WHITE
        }
    })
}

/// Connected groups among the black 8-neighbours of `(x, y)`, where two
/// neighbours are linked when they share an edge. A plus-shaped junction
/// therefore has four groups.
pub fn oracle_neighbor_groups(img: &GrayImage, x: usize, y: usize) -> usize {
    let cells: Vec<(isize, isize)> = (-1isize..=1)
        .flat_map(|dy| (-1isize..=1).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| (dx, dy) != (0, 0) && black_at(img, x as isize + dx, y as isize + dy))
        .collect();
    let mut seen = vec![false; cells.len()];
    let mut groups = 0;
    for start in 0..cells.len() {
        if seen[start] {
            continue;
        }
        groups += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for j in 0..cells.len() {
                let adjacent = (cells[i].0 - cells[j].0).abs() + (cells[i].1 - cells[j].1).abs() == 1;
                if !seen[j] && adjacent {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    groups
}

/// Whole-image passes deleting every branch point at once, until none remain.
pub fn oracle_remove_y_junctions(img: &GrayImage) -> GrayImage {
    let mut cur = img.clone();
    loop {
        let branches: Vec<(usize, usize)> = (0..cur.height())
            .flat_map(|y| (0..cur.width()).map(move |x| (x, y)))
            .filter(|&(x, y)| cur.get(x, y) == BLACK && oracle_neighbor_groups(&cur, x, y) >= 3)
            .collect();
        if branches.is_empty() {
            return cur;
        }
        for (x, y) in branches {
            cur.set(x, y, WHITE);
        }
    }
}

/// 8-connected black components, by flood fill.
pub fn oracle_components(img: &GrayImage) -> usize {
    let (w, h) = (img.width(), img.height());
    let mut seen = vec![false; w * h];
    let mut count = 0;
    for start in 0..w * h {
        if seen[start] || img.data()[start] != BLACK {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if black_at(img, nx, ny) {
                        let j = ny as usize * w + nx as usize;
                        if !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
    }
    count
}

pub fn oracle_has_black_2x2(img: &GrayImage) -> bool {
    (1..img.height()).any(|y| {
        (1..img.width()).any(|x| {
            [(x, y), (x - 1, y), (x, y - 1), (x - 1, y - 1)].iter().all(|&(a, b)| img.get(a, b) == BLACK)
        })
    })
}

/// White canvas with a few random black discs and ellipses, some
/// overlapping.
pub fn random_blobs(r: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    let blobs: Vec<(f64, f64, f64, f64, f64)> = (0..r.gen_range(1..=6))
        .map(|_| {
            (
                r.gen_range(0.0..w as f64),
                r.gen_range(0.0..h as f64),
                r.gen_range(1.5..w as f64 / 4.0),
                r.gen_range(1.5..h as f64 / 4.0),
                r.gen_range(0.0..PI),
            )
        })
        .collect();
    GrayImage::from_fn(w, h, |x, y| {
        let inside = blobs.iter().any(|&(cx, cy, a, b, t)| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let (u, v) = (dx * t.cos() + dy * t.sin(), -dx * t.sin() + dy * t.cos());
            (u / a).powi(2) + (v / b).powi(2) <= 1.0
        });
        if inside {
            BLACK
        } else {
            WHITE
        }
    })
}
