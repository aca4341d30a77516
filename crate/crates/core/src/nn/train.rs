use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::ModelCheckpoint;
use super::layers::Ctx;
use super::loss::cross_entropy_with_grad;
use super::model::Detector;
use super::optim::{cosine_lr, Adam, AdamConfig};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::features::{FreqMap, SampleFeatures};

pub const LABEL_REAL: usize = 0;
pub const LABEL_FAKE: usize = 1;

#[derive(Debug, Clone)]
pub struct Example {
    pub features: SampleFeatures,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub min_lr: f64,
    pub t_max: usize,
    pub patience: usize,
    pub flip_prob: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            batch_size: 32,
            lr: 1e-3,
            min_lr: 0.0,
            t_max: 50,
            patience: 5,
            flip_prob: 0.5,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_acc,lr\n");
    for r in history {
        s.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_acc, r.lr));
    }
    s
}

pub struct TrainOutcome {
    /// Weights of the first epoch reaching the best validation accuracy.
    pub best: Detector,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn checkpoint(&self, seed: u64, config_hash: u64) -> ModelCheckpoint {
        ModelCheckpoint::from_model(&self.best, self.best_epoch as u32, seed, config_hash)
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn usable(model: &Detector, f: &SampleFeatures) -> bool {
    (!model.mode().uses_ridge() || f.ridge.is_some()) && (!model.mode().uses_artifact() || f.freq.is_some())
}

/// Stacks the inputs of `items`; each item carries its per-stream flip flags.
pub(crate) fn assemble(model: &Detector, items: &[(&SampleFeatures, bool, bool)]) -> Result<(Option<Tensor>, Option<Tensor>)> {
    let b = items.len();
    let ridge = if model.mode().uses_ridge() {
        let n = model.config().feature_len;
        let mut data = Vec::with_capacity(b * n);
        for (f, flip, _) in items {
            let plain = f.ridge.as_ref().ok_or(Error::NoRidges)?;
            // fall back to the unflipped feature when the flipped image lost its ridges
            let v = if *flip { f.ridge_flipped.as_ref().unwrap_or(plain) } else { plain };
            if v.len() != n {
                return Err(Error::dims(n, v.len()));
            }
            data.extend_from_slice(v);
        }
        Some(Tensor::new(&[b, n], data)?)
    } else {
        None
    };
    let freq = if model.mode().uses_artifact() {
        let first: &FreqMap = items[0].0.freq.as_ref().ok_or_else(|| Error::InvalidParameter("missing spectrum".into()))?;
        let (w, h) = (first.width, first.height);
        let mut data = Vec::with_capacity(b * w * h);
        for (f, _, flip) in items {
            let m = f.freq.as_ref().ok_or_else(|| Error::InvalidParameter("missing spectrum".into()))?;
            if (m.width, m.height) != (w, h) {
                return Err(Error::dims(format!("{w}x{h}"), format!("{}x{}", m.width, m.height)));
            }
            if *flip {
                data.extend(m.mirrored().values);
            } else {
                data.extend_from_slice(&m.values);
            }
        }
        Some(Tensor::new(&[b, 1, h, w], data)?)
    } else {
        None
    };
    Ok((ridge, freq))
}

/// Eval-mode class predictions. Samples without ridges cannot feed the
/// ridge stream and are predicted fake.
pub fn predict(model: &mut Detector, samples: &[&SampleFeatures], batch_size: usize) -> Result<Vec<usize>> {
    let mut out = vec![LABEL_FAKE; samples.len()];
    let ok: Vec<usize> = (0..samples.len()).filter(|&i| usable(model, samples[i])).collect();
    for chunk in ok.chunks(batch_size.max(1)) {
        let items: Vec<_> = chunk.iter().map(|&i| (samples[i], false, false)).collect();
        let (r, f) = assemble(model, &items)?;
        let logits = model.forward(r.as_ref(), f.as_ref(), &mut Ctx::eval())?;
        for (&i, row) in chunk.iter().zip(logits.data().chunks_exact(2)) {
            out[i] = if row[1] > row[0] { LABEL_FAKE } else { LABEL_REAL };
        }
    }
    Ok(out)
}

pub fn accuracy(model: &mut Detector, examples: &[Example], batch_size: usize) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let feats: Vec<&SampleFeatures> = examples.iter().map(|e| &e.features).collect();
    let preds = predict(model, &feats, batch_size)?;
    let hits = preds.iter().zip(examples).filter(|(p, e)| **p == e.label).count();
    Ok(hits as f64 / examples.len() as f64)
}

/// Batch boundaries; a trailing batch of one is merged into its predecessor
/// because batch norm needs at least two samples.
fn batches(n: usize, size: usize) -> Vec<std::ops::Range<usize>> {
    let size = size.max(2);
    let mut out: Vec<_> = (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect();
    if out.len() > 1 && out.last().map_or(false, |r| r.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().end = last.end;
    }
    out
}

/// Trains with Adam, cosine LR and early stopping on validation accuracy.
/// Training samples lacking an input for an active stream are skipped.
/// `on_epoch` sees every history record as it is produced.
pub fn train(
    mut model: Detector,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let usable_idx: Vec<usize> = (0..train_set.len()).filter(|&i| usable(&model, &train_set[i].features)).collect();
    if usable_idx.len() < 2 || val_set.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.batch_size == 0 || !(0.0..=1.0).contains(&cfg.flip_prob) {
        return Err(Error::InvalidParameter("batch size must be positive and flip_prob in [0, 1]".into()));
    }
    let mut opt = Adam::new(cfg.adam);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Detector)> = None;
    let mut stale = 0;
    let mut stopped_early = false;
    for epoch in 0..cfg.max_epochs {
        let lr = cosine_lr(cfg.lr, cfg.min_lr, epoch, cfg.t_max);
        let mut order = usable_idx.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64)));
        let mut loss_sum = 0.0;
        for (bi, range) in batches(order.len(), cfg.batch_size).into_iter().enumerate() {
            let idx = &order[range];
            let items: Vec<_> = idx
                .iter()
                .map(|&i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(cfg.seed, epoch as u64), i as u64 + 1));
                    let ridge_flip = rng.gen_bool(cfg.flip_prob);
                    let freq_flip = rng.gen_bool(cfg.flip_prob);
                    (&train_set[i].features, ridge_flip, freq_flip)
                })
                .collect();
            let labels: Vec<usize> = idx.iter().map(|&i| train_set[i].label).collect();
            let (r, f) = assemble(&model, &items)?;
            let batch_seed = mix(mix(cfg.seed ^ 0xD5, epoch as u64), bi as u64);
            let logits = model.forward(r.as_ref(), f.as_ref(), &mut Ctx::train(batch_seed))?;
            let (loss, grad) = cross_entropy_with_grad(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("epoch {epoch}, batch {bi}: loss {loss} at lr {lr}")));
            }
            loss_sum += loss * idx.len() as f64;
            model.zero_grad();
            model.backward(&grad)?;
            opt.step(&mut model, lr);
        }
        let val_acc = accuracy(&mut model, val_set, cfg.batch_size)?;
        let rec = EpochRecord { epoch, train_loss: loss_sum / order.len() as f64, val_acc, lr };
        log::info!("epoch {epoch}: loss {:.5} val_acc {:.4} lr {:.2e}", rec.train_loss, val_acc, lr);
        on_epoch(&rec);
        history.push(rec);
        if best.as_ref().map_or(true, |(acc, _, _)| val_acc > *acc) {
            best = Some((val_acc, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_val_acc, best_epoch, mut best) = best.ok_or_else(|| Error::InvalidParameter("max_epochs is 0".into()))?;
    best.zero_grad();
    Ok(TrainOutcome { best, best_epoch, best_val_acc, history, stopped_early })
}
