use rfdfin_core::data::{load_corpus, split_by_identity, Sample};
use rfdfin_core::features::Wanted;
use rfdfin_core::nn::{self, history_csv, Detector, EpochRecord, Example, StreamMode};
use serde::{Deserialize, Serialize};

use super::{create_parent, required};
use crate::args::TrainArgs;
use crate::cache::FeatureCache;
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::pipeline::{extract_files, ExtractStats};
use crate::rundir::RunDir;

/// Contents of `train.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub mode: StreamMode,
    pub seed: u64,
    /// Hex form of the config hash stored in the checkpoint.
    pub config_hash: String,
    pub param_count: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub failed: usize,
    pub no_ridges: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub stopped_early: bool,
}

pub(super) fn examples(samples: &[Sample], wanted: Wanted, cfg: &RunConfig, cache: &mut FeatureCache) -> (Vec<Example>, ExtractStats) {
    let items: Vec<_> = samples.iter().map(|s| (s.path.clone(), wanted)).collect();
    let (feats, stats) = extract_files(&items, &cfg.features, cache, None);
    let out = samples
        .iter()
        .zip(feats)
        .filter_map(|(s, f)| f.map(|features| Example { features, label: s.label }))
        .collect();
    (out, stats)
}

/// Run directory contents: `config.toml`, `split.json`, `history.csv`,
/// `history.json`, `checkpoint.rfdf`, `train.json` and `manifest.json`.
/// The history files are written even when training diverges.
pub fn train(args: TrainArgs, mut cfg: RunConfig) -> CliResult<()> {
    if let Some(m) = args.mode {
        cfg.model.mode = m.into();
    }
    if let Some(e) = args.epochs {
        cfg.train.max_epochs = e;
    }
    cfg.validate()?;
    let root = required(args.data, &cfg.paths.data, "--data")?;
    let manifest = args.manifest.or_else(|| cfg.paths.manifest.clone());
    let run_dir = required(args.run_dir, &cfg.paths.run_dir, "--run-dir")?;
    let seed = cfg.train.seed;
    let mode = cfg.model.mode;

    let samples = load_corpus(&root, manifest.as_deref())?;
    let split = split_by_identity(&samples, cfg.split.fractions, seed)?;
    let parts = split.assign(&samples);

    let mut run = RunDir::create(&run_dir, "train")?;
    run.write_config(&cfg)?;
    run.write_json("split.json", &split)?;

    let cache_path = args.cache.or_else(|| cfg.paths.cache.clone()).unwrap_or_else(|| run.root().join("features.rfdf"));
    let mut cache = FeatureCache::load(&cache_path)?;
    let ridge = mode.uses_ridge();
    let freq = mode.uses_artifact();
    let train_wanted = Wanted { ridge, ridge_flipped: ridge && cfg.train.flip_prob > 0.0, freq };
    let val_wanted = Wanted { ridge, ridge_flipped: false, freq };
    let (train_set, s1) = examples(&parts.train, train_wanted, &cfg, &mut cache);
    let (val_set, s2) = examples(&parts.val, val_wanted, &cfg, &mut cache);
    create_parent(&cache_path)?;
    cache.save(&cache_path)?;
    log::info!("train split: {}", s1.summary());
    log::info!("val split: {}", s2.summary());

    let config_hash = cfg.hash()?;
    let model = Detector::new(mode, cfg.model.arch, seed)?;
    let param_count = model.param_count();
    let mut history: Vec<EpochRecord> = Vec::new();
    let result = nn::train(model, &train_set, &val_set, &cfg.train, |r| history.push(*r));
    run.write("history.csv", history_csv(&history))?;
    run.write_json("history.json", &history)?;
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            run.finish()?;
            return Err(e.into());
        }
    };
    outcome.checkpoint(seed, config_hash).save(run.file("checkpoint.rfdf"))?;
    let summary = TrainSummary {
        mode,
        seed,
        config_hash: format!("{config_hash:016x}"),
        param_count,
        train_samples: train_set.len(),
        val_samples: val_set.len(),
        failed: s1.failed.len() + s2.failed.len(),
        no_ridges: s1.no_ridges.len() + s2.no_ridges.len(),
        epochs_run: history.len(),
        best_epoch: outcome.best_epoch,
        best_val_acc: outcome.best_val_acc,
        stopped_early: outcome.stopped_early,
    };
    run.write_json("train.json", &summary)?;
    run.finish()?;
    println!(
        "best epoch {} with validation accuracy {:.4}; {} parameters; run directory {}",
        summary.best_epoch,
        summary.best_val_acc,
        param_count,
        run_dir.display()
    );
    Ok(())
}
