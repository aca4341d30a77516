use serde::{Deserialize, Serialize};

use super::layers::{Layer, ParamKind, Visitor};
use super::model::Detector;
use super::tensor::Tensor;

/// Anything exposing its tensors to a visitor.
pub trait Params {
    fn visit_params(&mut self, f: &mut Visitor<'_>);
}

impl<L: Layer> Params for L {
    fn visit_params(&mut self, f: &mut Visitor<'_>) {
        self.visit("", f);
    }
}

impl Params for Detector {
    fn visit_params(&mut self, f: &mut Visitor<'_>) {
        self.visit(f);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay: parameters shrink by `lr * weight_decay` each step.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

/// Adam with decoupled weight decay. Moments are kept per trainable tensor
/// in visit order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update with learning rate `lr`; tensors without a gradient are
    /// treated as having a zero gradient.
    pub fn step<P: Params + ?Sized>(&mut self, model: &mut P, lr: f64) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let decay = (1.0 - lr * c.weight_decay) as f32;
        let mut idx = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.visit_params(&mut |_, t: &mut Tensor, kind| {
            if kind != ParamKind::Trainable {
                return;
            }
            if ms.len() <= idx {
                ms.push(vec![0.0; t.numel()]);
                vs.push(vec![0.0; t.numel()]);
            }
            let grad = t.grad().map(<[f32]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]);
            let (m, v) = (&mut ms[idx], &mut vs[idx]);
            for (((p, g), mv), vv) in t.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = *g as f64;
                *mv = (c.beta1 * *mv as f64 + (1.0 - c.beta1) * g) as f32;
                *vv = (c.beta2 * *vv as f64 + (1.0 - c.beta2) * g * g) as f32;
                let mhat = *mv as f64 / bc1;
                let vhat = *vv as f64 / bc2;
                *p *= decay;
                *p -= (lr * mhat / (vhat.sqrt() + c.eps)) as f32;
            }
            idx += 1;
        });
    }
}

/// Cosine annealing from `base` to `min` over `t_max` epochs, held at `min`
/// afterwards.
pub fn cosine_lr(base: f64, min: f64, epoch: usize, t_max: usize) -> f64 {
    if t_max == 0 {
        return min;
    }
    let t = epoch.min(t_max) as f64 / t_max as f64;
    min + (base - min) * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Linear;
    use rand::SeedableRng;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_lr(1e-3, 0.0, 0, 50), 1e-3);
        assert!(cosine_lr(1e-3, 0.0, 50, 50).abs() < 1e-18);
        assert!((cosine_lr(1e-3, 0.0, 25, 50) - 5e-4).abs() < 1e-15);
        assert!(cosine_lr(1e-3, 0.0, 80, 50).abs() < 1e-18);
        assert_eq!(cosine_lr(1e-3, 1e-5, 3, 0), 1e-5);
    }

    /// f(w) = |w - c|^2 through a bias-only layer.
    #[test]
    fn quadratic_bowl_descends() {
        for lr in [1e-4, 1e-3, 1e-2] {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
            let mut layer = Linear::new(1, 3, &mut rng);
            let target = [1.0f32, -2.0, 0.5];
            let loss = |l: &Linear| -> f64 {
                l.bias.data().iter().zip(&target).map(|(b, c)| ((b - c) as f64).powi(2)).sum()
            };
            let mut opt = Adam::new(AdamConfig { weight_decay: 0.0, ..AdamConfig::default() });
            let start = loss(&layer);
            for _ in 0..50 {
                layer.zero_grad_all();
                let g: Vec<f32> = layer.bias.data().iter().zip(&target).map(|(b, c)| 2.0 * (b - c)).collect();
                layer.bias.grad_mut().copy_from_slice(&g);
                opt.step(&mut layer, lr);
            }
            assert!(loss(&layer) < start, "lr {lr}");
        }
    }

    #[test]
    fn decay_shrinks_without_gradient() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut layer = Linear::new(2, 2, &mut rng);
        let before: f32 = layer.weight.data().iter().map(|v| v.abs()).sum();
        let mut opt = Adam::new(AdamConfig { weight_decay: 0.5, ..AdamConfig::default() });
        opt.step(&mut layer, 0.1);
        let after: f32 = layer.weight.data().iter().map(|v| v.abs()).sum();
        assert!((after - before * 0.95).abs() < 1e-5);
    }

    impl Linear {
        fn zero_grad_all(&mut self) {
            self.weight.zero_grad();
            self.bias.zero_grad();
        }
    }
}
