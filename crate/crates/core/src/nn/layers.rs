//! Layers with hand-written backward passes.
//!
//! `forward` in train mode records what `backward` needs; `backward`
//! consumes that record, accumulates parameter gradients and returns the
//! gradient with respect to the layer input. Eval-mode forwards record
//! nothing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Forward-pass context: mode plus the RNG that draws dropout masks.
pub struct Ctx {
    pub mode: Mode,
    rng: ChaCha8Rng,
}

impl Ctx {
    pub fn train(seed: u64) -> Self {
        Self { mode: Mode::Train, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn eval() -> Self {
        Self { mode: Mode::Eval, rng: ChaCha8Rng::seed_from_u64(0) }
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Trainable,
    /// Persistent state that is not optimized (batch-norm running stats).
    Buffer,
}

pub type Visitor<'a> = dyn FnMut(&str, &mut Tensor, ParamKind) + 'a;
pub type RefVisitor<'a> = dyn FnMut(&str, &Tensor, ParamKind) + 'a;

pub trait Layer: Send + Sync {
    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor>;
    fn backward(&mut self, grad: &Tensor) -> Result<Tensor>;
    fn visit(&mut self, _prefix: &str, _f: &mut Visitor<'_>) {}
    fn visit_ref(&self, _prefix: &str, _f: &mut RefVisitor<'_>) {}
    fn box_clone(&self) -> Box<dyn Layer>;
}

impl Clone for Box<dyn Layer> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

/// Eight-lane dot product; the split accumulators let the compiler vectorize.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    acc.iter().sum::<f32>() + tail
}

#[inline]
fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

fn xavier(rng: &mut ChaCha8Rng, n: usize, fan_in: usize, fan_out: usize) -> Vec<f32> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

fn take_cache<T>(slot: &mut Option<T>) -> Result<T> {
    slot.take().ok_or(Error::NoTape)
}

// ---------------------------------------------------------------------------

#[derive(Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
    input: Option<Tensor>,
}

impl Linear {
    /// Xavier-uniform weights, zero bias.
    pub fn new(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = xavier(rng, inputs * outputs, inputs, outputs);
        Self {
            weight: Tensor::new(&[outputs, inputs], w).expect("shape"),
            bias: Tensor::zeros(&[outputs]),
            input: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }
}

impl Layer for Linear {
    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        x.expect_rank(2, "linear input")?;
        let (b, i, o) = (x.shape()[0], self.inputs(), self.outputs());
        if x.shape()[1] != i {
            return Err(Error::dims(i, x.shape()[1]));
        }
        let mut y = vec![0.0f32; b * o];
        for (row, out) in x.data().chunks_exact(i).zip(y.chunks_exact_mut(o)) {
            for (k, v) in out.iter_mut().enumerate() {
                *v = dot(row, &self.weight.data()[k * i..][..i]) + self.bias.data()[k];
            }
        }
        if ctx.is_train() {
            self.input = Some(x.clone());
        }
        Tensor::new(&[b, o], y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = take_cache(&mut self.input)?;
        let (b, i, o) = (x.shape()[0], self.inputs(), self.outputs());
        if grad.shape() != [b, o] {
            return Err(Error::dims(format!("[{b}, {o}]"), format!("{:?}", grad.shape())));
        }
        let mut dx = vec![0.0f32; b * i];
        {
            let dw = self.weight.grad_mut();
            for (g_row, x_row) in grad.data().chunks_exact(o).zip(x.data().chunks_exact(i)) {
                for (k, &g) in g_row.iter().enumerate() {
                    axpy(g, x_row, &mut dw[k * i..][..i]);
                }
            }
        }
        {
            let db = self.bias.grad_mut();
            for g_row in grad.data().chunks_exact(o) {
                for (d, g) in db.iter_mut().zip(g_row) {
                    *d += g;
                }
            }
        }
        for (g_row, dx_row) in grad.data().chunks_exact(o).zip(dx.chunks_exact_mut(i)) {
            for (k, &g) in g_row.iter().enumerate() {
                axpy(g, &self.weight.data()[k * i..][..i], dx_row);
            }
        }
        Tensor::new(&[b, i], dx)
    }

    fn visit(&mut self, prefix: &str, f: &mut Visitor<'_>) {
        f(&format!("{prefix}.weight"), &mut self.weight, ParamKind::Trainable);
        f(&format!("{prefix}.bias"), &mut self.bias, ParamKind::Trainable);
    }

    fn visit_ref(&self, prefix: &str, f: &mut RefVisitor<'_>) {
        f(&format!("{prefix}.weight"), &self.weight, ParamKind::Trainable);
        f(&format!("{prefix}.bias"), &self.bias, ParamKind::Trainable);
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------------------

/// 3x3 convolution, stride 1, zero padding 1.
#[derive(Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    /// The first layer of a network never needs its input gradient.
    pub input_grad: bool,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = xavier(rng, cout * cin * 9, cin * 9, cout * 9);
        Self {
            weight: Tensor::new(&[cout, cin, 3, 3], w).expect("shape"),
            bias: Tensor::zeros(&[cout]),
            input_grad: true,
            input: None,
        }
    }

    fn channels(&self) -> (usize, usize) {
        (self.weight.shape()[1], self.weight.shape()[0])
    }

    /// Valid output-x range and input offset for kernel column `kx`.
    #[inline]
    fn span(kx: usize, w: usize) -> (usize, usize) {
        match kx {
            0 => (1, w),
            1 => (0, w),
            _ => (0, w.saturating_sub(1)),
        }
    }

    fn forward_sample(&self, x: &[f32], h: usize, w: usize) -> Vec<f32> {
        let (cin, cout) = self.channels();
        let plane = h * w;
        let wt = self.weight.data();
        let mut out = vec![0.0f32; cout * plane];
        for co in 0..cout {
            let bias = self.bias.data()[co];
            for y in 0..h {
                let out_row = &mut out[co * plane + y * w..][..w];
                out_row.iter_mut().for_each(|v| *v = bias);
                for ci in 0..cin {
                    for ky in 0..3 {
                        let iy = y as isize + ky as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let in_row = &x[ci * plane + iy as usize * w..][..w];
                        for kx in 0..3 {
                            let k = wt[((co * cin + ci) * 3 + ky) * 3 + kx];
                            let (x0, x1) = Self::span(kx, w);
                            if x0 >= x1 {
                                continue;
                            }
                            let src = &in_row[x0 + kx - 1..x1 + kx - 1];
                            axpy(k, src, &mut out_row[x0..x1]);
                        }
                    }
                }
            }
        }
        out
    }

    /// Weight/bias gradient of one sample and optionally its input gradient.
    fn backward_sample(&self, x: &[f32], g: &[f32], h: usize, w: usize) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
        let (cin, cout) = self.channels();
        let plane = h * w;
        let wt = self.weight.data();
        let mut dw = vec![0.0f32; cout * cin * 9];
        let mut db = vec![0.0f32; cout];
        for co in 0..cout {
            let gp = &g[co * plane..][..plane];
            db[co] = gp.iter().map(|&v| v as f64).sum::<f64>() as f32;
            for ci in 0..cin {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let (x0, x1) = Self::span(kx, w);
                        let mut acc = 0.0f64;
                        for y in 0..h {
                            let iy = y as isize + ky as isize - 1;
                            if iy < 0 || iy >= h as isize || x0 >= x1 {
                                continue;
                            }
                            let g_row = &gp[y * w + x0..y * w + x1];
                            let in_row = &x[ci * plane + iy as usize * w..][..w];
                            acc += dot(g_row, &in_row[x0 + kx - 1..x1 + kx - 1]) as f64;
                        }
                        dw[((co * cin + ci) * 3 + ky) * 3 + kx] = acc as f32;
                    }
                }
            }
        }
        let mut dx = Vec::new();
        if self.input_grad {
            dx = vec![0.0f32; cin * plane];
            for ci in 0..cin {
                for iy in 0..h {
                    let dx_row = &mut dx[ci * plane + iy * w..][..w];
                    for co in 0..cout {
                        for ky in 0..3 {
                            // output row y reads input row iy = y + ky - 1
                            let y = iy as isize - ky as isize + 1;
                            if y < 0 || y >= h as isize {
                                continue;
                            }
                            let g_row = &g[co * plane + y as usize * w..][..w];
                            for kx in 0..3 {
                                let k = wt[((co * cin + ci) * 3 + ky) * 3 + kx];
                                let (x0, x1) = Self::span(kx, w);
                                if x0 >= x1 {
                                    continue;
                                }
                                axpy(k, &g_row[x0..x1], &mut dx_row[x0 + kx - 1..x1 + kx - 1]);
                            }
                        }
                    }
                }
            }
        }
        (dw, db, dx)
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        x.expect_rank(4, "conv input")?;
        let (cin, cout) = self.channels();
        let [b, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        if c != cin {
            return Err(Error::dims(cin, c));
        }
        let per_in = cin * h * w;
        let outs = par::map_range(b, |i| self.forward_sample(&x.data()[i * per_in..][..per_in], h, w));
        if ctx.is_train() {
            self.input = Some(x.clone());
        }
        Tensor::new(&[b, cout, h, w], outs.concat())
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = take_cache(&mut self.input)?;
        let (cin, cout) = self.channels();
        let [b, _, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        if grad.shape() != [b, cout, h, w] {
            return Err(Error::dims(format!("[{b}, {cout}, {h}, {w}]"), format!("{:?}", grad.shape())));
        }
        let (per_in, per_out) = (cin * h * w, cout * h * w);
        let parts = par::map_range(b, |i| {
            self.backward_sample(&x.data()[i * per_in..][..per_in], &grad.data()[i * per_out..][..per_out], h, w)
        });
        // fixed-order reduction keeps gradients independent of thread count
        let mut dx = Vec::with_capacity(if self.input_grad { b * per_in } else { 0 });
        {
            let dw = self.weight.grad_mut();
            for (pdw, _, _) in &parts {
                dw.iter_mut().zip(pdw).for_each(|(a, v)| *a += v);
            }
        }
        {
            let db = self.bias.grad_mut();
            for (_, pdb, _) in &parts {
                db.iter_mut().zip(pdb).for_each(|(a, v)| *a += v);
            }
        }
        if self.input_grad {
            for (_, _, pdx) in parts {
                dx.extend(pdx);
            }
            Tensor::new(&[b, cin, h, w], dx)
        } else {
            Ok(Tensor::zeros(&[b, cin, h, w]))
        }
    }

    fn visit(&mut self, prefix: &str, f: &mut Visitor<'_>) {
        f(&format!("{prefix}.weight"), &mut self.weight, ParamKind::Trainable);
        f(&format!("{prefix}.bias"), &mut self.bias, ParamKind::Trainable);
    }

    fn visit_ref(&self, prefix: &str, f: &mut RefVisitor<'_>) {
        f(&format!("{prefix}.weight"), &self.weight, ParamKind::Trainable);
        f(&format!("{prefix}.bias"), &self.bias, ParamKind::Trainable);
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone)]
struct BnCache {
    xhat: Vec<f32>,
    inv_std: Vec<f64>,
    shape: Vec<usize>,
}

/// Batch normalization over dim 1 of `[B, C]` or `[B, C, H, W]` inputs.
#[derive(Clone)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    fn layout(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        let c = self.gamma.numel();
        if x.shape().len() < 2 || x.shape()[1] != c {
            return Err(Error::dims(format!("[B, {c}, ..]"), format!("{:?}", x.shape())));
        }
        Ok((x.shape()[0], c, x.shape()[2..].iter().product()))
    }
}

impl Layer for BatchNorm {
    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let (b, c, s) = self.layout(x)?;
        let n = b * s;
        let at = |bi: usize, ci: usize| (bi * c + ci) * s;
        let mut y = vec![0.0f32; x.numel()];
        if !ctx.is_train() {
            for ci in 0..c {
                let mean = self.running_mean.data()[ci] as f64;
                let inv = 1.0 / (self.running_var.data()[ci] as f64 + self.eps).sqrt();
                let (g, bt) = (self.gamma.data()[ci] as f64, self.beta.data()[ci] as f64);
                for bi in 0..b {
                    let o = at(bi, ci);
                    for k in o..o + s {
                        y[k] = ((x.data()[k] as f64 - mean) * inv * g + bt) as f32;
                    }
                }
            }
            return Tensor::new(x.shape(), y);
        }
        let mut xhat = vec![0.0f32; x.numel()];
        let mut inv_std = vec![0.0f64; c];
        for ci in 0..c {
            let (mut sum, mut sum2) = (0.0f64, 0.0f64);
            for bi in 0..b {
                let o = at(bi, ci);
                for &v in &x.data()[o..o + s] {
                    sum += v as f64;
                }
            }
            let mean = sum / n as f64;
            for bi in 0..b {
                let o = at(bi, ci);
                for &v in &x.data()[o..o + s] {
                    let d = v as f64 - mean;
                    sum2 += d * d;
                }
            }
            let var = sum2 / n as f64;
            let inv = 1.0 / (var + self.eps).sqrt();
            inv_std[ci] = inv;
            let (g, bt) = (self.gamma.data()[ci] as f64, self.beta.data()[ci] as f64);
            for bi in 0..b {
                let o = at(bi, ci);
                for k in o..o + s {
                    let xh = (x.data()[k] as f64 - mean) * inv;
                    xhat[k] = xh as f32;
                    y[k] = (xh * g + bt) as f32;
                }
            }
            let m = self.momentum;
            let unbiased = if n > 1 { var * n as f64 / (n - 1) as f64 } else { var };
            let rm = &mut self.running_mean.data_mut()[ci];
            *rm = ((1.0 - m) * *rm as f64 + m * mean) as f32;
            let rv = &mut self.running_var.data_mut()[ci];
            *rv = ((1.0 - m) * *rv as f64 + m * unbiased) as f32;
        }
        self.cache = Some(BnCache { xhat, inv_std, shape: x.shape().to_vec() });
        Tensor::new(x.shape(), y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = take_cache(&mut self.cache)?;
        if grad.shape() != cache.shape.as_slice() {
            return Err(Error::dims(format!("{:?}", cache.shape), format!("{:?}", grad.shape())));
        }
        let (b, c, s) = (cache.shape[0], cache.shape[1], cache.shape[2..].iter().product::<usize>());
        let n = (b * s) as f64;
        let at = |bi: usize, ci: usize| (bi * c + ci) * s;
        let mut dx = vec![0.0f32; grad.numel()];
        let mut dgamma = vec![0.0f32; c];
        let mut dbeta = vec![0.0f32; c];
        for ci in 0..c {
            let (mut sg, mut sgx) = (0.0f64, 0.0f64);
            for bi in 0..b {
                let o = at(bi, ci);
                for k in o..o + s {
                    sg += grad.data()[k] as f64;
                    sgx += grad.data()[k] as f64 * cache.xhat[k] as f64;
                }
            }
            dgamma[ci] = sgx as f32;
            dbeta[ci] = sg as f32;
            let scale = self.gamma.data()[ci] as f64 * cache.inv_std[ci] / n;
            for bi in 0..b {
                let o = at(bi, ci);
                for k in o..o + s {
                    dx[k] = (scale * (n * grad.data()[k] as f64 - sg - cache.xhat[k] as f64 * sgx)) as f32;
                }
            }
        }
        self.gamma.grad_mut().iter_mut().zip(&dgamma).for_each(|(a, v)| *a += v);
        self.beta.grad_mut().iter_mut().zip(&dbeta).for_each(|(a, v)| *a += v);
        Tensor::new(&cache.shape, dx)
    }

    fn visit(&mut self, prefix: &str, f: &mut Visitor<'_>) {
        f(&format!("{prefix}.gamma"), &mut self.gamma, ParamKind::Trainable);
        f(&format!("{prefix}.beta"), &mut self.beta, ParamKind::Trainable);
        f(&format!("{prefix}.running_mean"), &mut self.running_mean, ParamKind::Buffer);
        f(&format!("{prefix}.running_var"), &mut self.running_var, ParamKind::Buffer);
    }

    fn visit_ref(&self, prefix: &str, f: &mut RefVisitor<'_>) {
        f(&format!("{prefix}.gamma"), &self.gamma, ParamKind::Trainable);
        f(&format!("{prefix}.beta"), &self.beta, ParamKind::Trainable);
        f(&format!("{prefix}.running_mean"), &self.running_mean, ParamKind::Buffer);
        f(&format!("{prefix}.running_var"), &self.running_var, ParamKind::Buffer);
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Layer for Relu {
    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let y: Vec<f32> = x.data().iter().map(|&v| v.max(0.0)).collect();
        if ctx.is_train() {
            self.mask = Some(x.data().iter().map(|&v| v > 0.0).collect());
        }
        Tensor::new(x.shape(), y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mask = take_cache(&mut self.mask)?;
        if mask.len() != grad.numel() {
            return Err(Error::dims(mask.len(), grad.numel()));
        }
        let d = grad.data().iter().zip(&mask).map(|(&g, &m)| if m { g } else { 0.0 }).collect();
        Tensor::new(grad.shape(), d)
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone)]
struct PoolCache {
    argmax: Vec<u32>,
    in_shape: Vec<usize>,
}

/// Max pooling of `[B, C, H, W]` onto an `out_h x out_w` grid with bins
/// `[floor(i*H/out), ceil((i+1)*H/out))`.
fn max_pool(x: &Tensor, out_h: usize, out_w: usize, bins: impl Fn(usize, usize, usize) -> (usize, usize)) -> (Vec<f32>, Vec<u32>) {
    let [b, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let mut y = Vec::with_capacity(b * c * out_h * out_w);
    let mut arg = Vec::with_capacity(y.capacity());
    for p in 0..b * c {
        let plane = &x.data()[p * h * w..][..h * w];
        for oy in 0..out_h {
            let (y0, y1) = bins(oy, h, out_h);
            for ox in 0..out_w {
                let (x0, x1) = bins(ox, w, out_w);
                let mut best = f32::NEG_INFINITY;
                let mut best_i = y0 * w + x0;
                for yy in y0..y1 {
                    for xx in x0..x1 {
                        let v = plane[yy * w + xx];
                        if v > best {
                            best = v;
                            best_i = yy * w + xx;
                        }
                    }
                }
                y.push(best);
                arg.push(best_i as u32);
            }
        }
    }
    (y, arg)
}

fn pool_backward(grad: &Tensor, cache: &PoolCache) -> Result<Tensor> {
    let [b, c, h, w] = [cache.in_shape[0], cache.in_shape[1], cache.in_shape[2], cache.in_shape[3]];
    if grad.numel() != cache.argmax.len() {
        return Err(Error::dims(cache.argmax.len(), grad.numel()));
    }
    let per_out = grad.numel() / (b * c);
    let mut dx = vec![0.0f32; b * c * h * w];
    for p in 0..b * c {
        for k in 0..per_out {
            let i = p * per_out + k;
            dx[p * h * w + cache.argmax[i] as usize] += grad.data()[i];
        }
    }
    Tensor::new(&cache.in_shape, dx)
}

/// 2x2 max pooling with stride 2 (odd trailing rows/columns dropped).
#[derive(Clone, Default)]
pub struct MaxPool2 {
    cache: Option<PoolCache>,
}

impl Layer for MaxPool2 {
    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        x.expect_rank(4, "pool input")?;
        let (h, w) = (x.shape()[2], x.shape()[3]);
        if h < 2 || w < 2 {
            return Err(Error::TooSmall { width: w, height: h });
        }
        let (oh, ow) = (h / 2, w / 2);
        let (y, argmax) = max_pool(x, oh, ow, |i, _, _| (2 * i, 2 * i + 2));
        if ctx.is_train() {
            self.cache = Some(PoolCache { argmax, in_shape: x.shape().to_vec() });
        }
        Tensor::new(&[x.shape()[0], x.shape()[1], oh, ow], y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = take_cache(&mut self.cache)?;
        pool_backward(grad, &cache)
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

#[derive(Clone)]
pub struct AdaptiveMaxPool {
    pub out_h: usize,
    pub out_w: usize,
    cache: Option<PoolCache>,
}

impl AdaptiveMaxPool {
    pub fn new(out_h: usize, out_w: usize) -> Self {
        Self { out_h, out_w, cache: None }
    }
}

impl Layer for AdaptiveMaxPool {
    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        x.expect_rank(4, "pool input")?;
        let bins = |i: usize, n: usize, out: usize| ((i * n) / out, ((i + 1) * n).div_ceil(out));
        let (y, argmax) = max_pool(x, self.out_h, self.out_w, bins);
        if ctx.is_train() {
            self.cache = Some(PoolCache { argmax, in_shape: x.shape().to_vec() });
        }
        Tensor::new(&[x.shape()[0], x.shape()[1], self.out_h, self.out_w], y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = take_cache(&mut self.cache)?;
        pool_backward(grad, &cache)
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Default)]
pub struct Flatten {
    shape: Option<Vec<usize>>,
}

impl Layer for Flatten {
    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let b = x.batch();
        if ctx.is_train() {
            self.shape = Some(x.shape().to_vec());
        }
        x.clone().reshape(&[b, x.numel() / b.max(1)])
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = take_cache(&mut self.shape)?;
        grad.clone().reshape(&shape)
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

/// Inverted dropout: kept activations are scaled by `1/(1-p)` in training.
#[derive(Clone)]
pub struct Dropout {
    pub p: f64,
    mask: Option<Vec<f32>>,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout probability must be in [0, 1)");
        Self { p, mask: None }
    }
}

impl Layer for Dropout {
    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        if !ctx.is_train() {
            return Ok(x.clone());
        }
        let scale = (1.0 / (1.0 - self.p)) as f32;
        let mask: Vec<f32> =
            (0..x.numel()).map(|_| if ctx.rng.gen_bool(self.p) { 0.0 } else { scale }).collect();
        let y = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.mask = Some(mask);
        Tensor::new(x.shape(), y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mask = take_cache(&mut self.mask)?;
        if mask.len() != grad.numel() {
            return Err(Error::dims(mask.len(), grad.numel()));
        }
        Tensor::new(grad.shape(), grad.data().iter().zip(&mask).map(|(g, m)| g * m).collect())
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

// ---------------------------------------------------------------------------

/// Ordered stack of named layers.
#[derive(Clone, Default)]
pub struct Sequential {
    layers: Vec<(String, Box<dyn Layer>)>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, name: &str, layer: impl Layer + 'static) -> Self {
        self.layers.push((name.to_string(), Box::new(layer)));
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

impl Layer for Sequential {
    fn forward(&mut self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let mut cur = x.clone();
        for (_, layer) in self.layers.iter_mut() {
            cur = layer.forward(&cur, ctx)?;
        }
        Ok(cur)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut cur = grad.clone();
        for (_, layer) in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    fn visit(&mut self, prefix: &str, f: &mut Visitor<'_>) {
        for (name, layer) in self.layers.iter_mut() {
            let p = if prefix.is_empty() { name.clone() } else { format!("{prefix}.{name}") };
            layer.visit(&p, f);
        }
    }

    fn visit_ref(&self, prefix: &str, f: &mut RefVisitor<'_>) {
        for (name, layer) in self.layers.iter() {
            let p = if prefix.is_empty() { name.clone() } else { format!("{prefix}.{name}") };
            layer.visit_ref(&p, f);
        }
    }

    fn box_clone(&self) -> Box<dyn Layer> {
        Box::new(self.clone())
    }
}

/// Number of trainable scalars; batch-norm running statistics are excluded.
pub fn param_count(layer: &dyn Layer) -> usize {
    let mut n = 0;
    layer.visit_ref("", &mut |_, t, kind| {
        if kind == ParamKind::Trainable {
            n += t.numel();
        }
    });
    n
}
