use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    param_count, AdaptiveMaxPool, BatchNorm, Conv2d, Ctx, Dropout, Flatten, Layer, Linear, MaxPool2,
    Relu, RefVisitor, Sequential, Visitor,
};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Smallest spectrum side the artifact stream accepts.
pub const MIN_FREQ_SIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    Fused,
    RidgeOnly,
    ArtifactOnly,
}

impl StreamMode {
    pub fn uses_ridge(self) -> bool {
        self != StreamMode::ArtifactOnly
    }

    pub fn uses_artifact(self) -> bool {
        self != StreamMode::RidgeOnly
    }

    pub(crate) fn code(self) -> u16 {
        match self {
            StreamMode::Fused => 0,
            StreamMode::RidgeOnly => 1,
            StreamMode::ArtifactOnly => 2,
        }
    }

    pub(crate) fn from_code(code: u16) -> Option<Self> {
        match code {
            0 => Some(StreamMode::Fused),
            1 => Some(StreamMode::RidgeOnly),
            2 => Some(StreamMode::ArtifactOnly),
            _ => None,
        }
    }
}

/// Layer widths of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Length of the ridge feature (DFT points per segment).
    pub feature_len: usize,
    /// Shared embedding width of both streams.
    pub embed: usize,
    pub ridge_hidden: usize,
    pub conv1: usize,
    pub conv2: usize,
    /// Side of the adaptive max-pool grid ahead of the artifact FC layer.
    pub pool: usize,
    pub head_hidden: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feature_len: 128,
            embed: 128,
            ridge_hidden: 256,
            conv1: 8,
            conv2: 16,
            pool: 4,
            head_hidden: 64,
            dropout: 0.3,
        }
    }
}

impl ModelConfig {
    pub(crate) fn to_values(self) -> Vec<f32> {
        [self.feature_len, self.embed, self.ridge_hidden, self.conv1, self.conv2, self.pool, self.head_hidden]
            .iter()
            .map(|&v| v as f32)
            .chain(std::iter::once((self.dropout * 1e4).round() as f32))
            .collect()
    }

    pub(crate) fn from_values(v: &[f32]) -> Result<Self> {
        if v.len() != 8 || v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Corrupt("bad model configuration record".into()));
        }
        let u = |i: usize| v[i] as usize;
        Ok(Self {
            feature_len: u(0),
            embed: u(1),
            ridge_hidden: u(2),
            conv1: u(3),
            conv2: u(4),
            pool: u(5),
            head_hidden: u(6),
            dropout: v[7] as f64 / 1e4,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [self.feature_len, self.embed, self.ridge_hidden, self.conv1, self.conv2, self.pool, self.head_hidden];
        if widths.contains(&0) {
            return Err(Error::InvalidParameter("model widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// BatchNorm over the raw ridge feature, then two FC/BN/ReLU/dropout blocks.
pub fn ridge_net(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Sequential {
    Sequential::new()
        .push("bn_in", BatchNorm::new(cfg.feature_len))
        .push("fc1", Linear::new(cfg.feature_len, cfg.ridge_hidden, rng))
        .push("bn1", BatchNorm::new(cfg.ridge_hidden))
        .push("relu1", Relu::default())
        .push("drop1", Dropout::new(cfg.dropout))
        .push("fc2", Linear::new(cfg.ridge_hidden, cfg.embed, rng))
        .push("bn2", BatchNorm::new(cfg.embed))
        .push("relu2", Relu::default())
        .push("drop2", Dropout::new(cfg.dropout))
}

/// Two conv blocks, adaptive max pooling and a projection to the embedding.
pub fn artifact_net(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Sequential {
    let mut conv1 = Conv2d::new(1, cfg.conv1, rng);
    conv1.input_grad = false;
    Sequential::new()
        .push("conv1", conv1)
        .push("bn1", BatchNorm::new(cfg.conv1))
        .push("relu1", Relu::default())
        .push("pool1", MaxPool2::default())
        .push("conv2", Conv2d::new(cfg.conv1, cfg.conv2, rng))
        .push("bn2", BatchNorm::new(cfg.conv2))
        .push("relu2", Relu::default())
        .push("pool2", MaxPool2::default())
        .push("adapt", AdaptiveMaxPool::new(cfg.pool, cfg.pool))
        .push("flatten", Flatten::default())
        .push("fc", Linear::new(cfg.conv2 * cfg.pool * cfg.pool, cfg.embed, rng))
}

pub fn fusion_head(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Sequential {
    Sequential::new()
        .push("fc1", Linear::new(cfg.embed, cfg.head_hidden, rng))
        .push("relu", Relu::default())
        .push("fc2", Linear::new(cfg.head_hidden, 2, rng))
}

/// Two-stream detector. Single-stream variants replace the fusion MLP by a
/// single FC layer on top of the surviving stream.
#[derive(Clone)]
pub struct Detector {
    mode: StreamMode,
    config: ModelConfig,
    ridge: Option<Sequential>,
    artifact: Option<Sequential>,
    head: Sequential,
}

impl Detector {
    pub fn new(mode: StreamMode, config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let artifact = mode.uses_artifact().then(|| artifact_net(&config, &mut rng));
        let ridge = mode.uses_ridge().then(|| ridge_net(&config, &mut rng));
        let head = match mode {
            StreamMode::Fused => fusion_head(&config, &mut rng),
            _ => Sequential::new().push("fc", Linear::new(config.embed, 2, &mut rng)),
        };
        Ok(Self { mode, config, ridge, artifact, head })
    }

    pub fn mode(&self) -> StreamMode {
        self.mode
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Logits `[B, 2]` (real, fake). `ridge` is `[B, feature_len]`, `freq` is
    /// `[B, 1, H, W]`; each is required only when its stream is present.
    pub fn forward(&mut self, ridge: Option<&Tensor>, freq: Option<&Tensor>, ctx: &mut Ctx) -> Result<Tensor> {
        let r = match self.ridge.as_mut() {
            Some(net) => {
                let x = ridge.ok_or_else(|| Error::InvalidParameter("ridge input required".into()))?;
                if x.shape().len() != 2 || x.shape()[1] != self.config.feature_len {
                    return Err(Error::dims(format!("[B, {}]", self.config.feature_len), format!("{:?}", x.shape())));
                }
                Some(net.forward(x, ctx)?)
            }
            None => None,
        };
        let a = match self.artifact.as_mut() {
            Some(net) => {
                let x = freq.ok_or_else(|| Error::InvalidParameter("spectrum input required".into()))?;
                x.expect_rank(4, "spectrum batch")?;
                let (h, w) = (x.shape()[2], x.shape()[3]);
                if h < MIN_FREQ_SIDE || w < MIN_FREQ_SIDE {
                    return Err(Error::TooSmall { width: w, height: h });
                }
                Some(net.forward(x, ctx)?)
            }
            None => None,
        };
        let z = match (r, a) {
            (Some(r), Some(a)) => fuse(&r, &a)?,
            (Some(t), None) | (None, Some(t)) => t,
            (None, None) => unreachable!("a detector always has a stream"),
        };
        self.head.forward(&z, ctx)
    }

    /// Back-propagates the logit gradient; the sum fusion hands the same
    /// gradient to both streams.
    pub fn backward(&mut self, grad: &Tensor) -> Result<()> {
        let g = self.head.backward(grad)?;
        if let Some(net) = self.ridge.as_mut() {
            net.backward(&g)?;
        }
        if let Some(net) = self.artifact.as_mut() {
            net.backward(&g)?;
        }
        Ok(())
    }

    pub fn visit(&mut self, f: &mut Visitor<'_>) {
        if let Some(net) = self.artifact.as_mut() {
            net.visit("artifact", f);
        }
        if let Some(net) = self.ridge.as_mut() {
            net.visit("ridge", f);
        }
        self.head.visit("head", f);
    }

    pub fn visit_ref(&self, f: &mut RefVisitor<'_>) {
        if let Some(net) = self.artifact.as_ref() {
            net.visit_ref("artifact", f);
        }
        if let Some(net) = self.ridge.as_ref() {
            net.visit_ref("ridge", f);
        }
        self.head.visit_ref("head", f);
    }

    pub fn param_count(&self) -> usize {
        self.ridge.as_ref().map_or(0, |n| param_count(n))
            + self.artifact.as_ref().map_or(0, |n| param_count(n))
            + param_count(&self.head)
    }

    pub fn zero_grad(&mut self) {
        self.visit(&mut |_, t, _| t.zero_grad());
    }

    /// Parameters and buffers in a fixed order, gradients dropped.
    pub fn state(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit_ref(&mut |name, t, _| {
            let mut t = t.clone();
            t.take_grad();
            out.push((name.to_string(), t));
        });
        out
    }

    /// Copies values from `state`; every tensor must be present with the
    /// same shape.
    pub fn load_state(&mut self, state: &[(String, Tensor)]) -> Result<()> {
        let lookup: std::collections::HashMap<&str, &Tensor> = state.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut err = None;
        self.visit(&mut |name, t, _| {
            if err.is_some() {
                return;
            }
            match lookup.get(name) {
                Some(src) if src.shape() == t.shape() => t.data_mut().copy_from_slice(src.data()),
                Some(src) => {
                    err = Some(Error::dims(format!("{name} {:?}", t.shape()), format!("{:?}", src.shape())))
                }
                None => err = Some(Error::Corrupt(format!("missing tensor {name}"))),
            }
        });
        err.map_or(Ok(()), Err)
    }
}

/// Element-wise sum of the two stream embeddings.
pub fn fuse(ridge: &Tensor, artifact: &Tensor) -> Result<Tensor> {
    if ridge.shape() != artifact.shape() {
        return Err(Error::dims(format!("{:?}", ridge.shape()), format!("{:?}", artifact.shape())));
    }
    let data = ridge.data().iter().zip(artifact.data()).map(|(a, b)| a + b).collect();
    Tensor::new(ridge.shape(), data)
}
