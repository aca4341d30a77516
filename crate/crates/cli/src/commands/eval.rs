use std::fs;

use rfdfin_core::data::{evaluate, load_corpus, SplitSpec};
use rfdfin_core::features::Wanted;
use rfdfin_core::nn::ModelCheckpoint;

use super::{create_parent, required};
use crate::args::{EvalArgs, SplitArg};
use crate::cache::FeatureCache;
use crate::commands::TrainSummary;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::extract_files;

/// Prints the report as a table (or JSON with `--json`) and optionally
/// writes the JSON form to `--out`. Images that fail to load are logged
/// and left out of the report.
pub fn eval(args: EvalArgs, cfg: RunConfig) -> CliResult<()> {
    let ck = ModelCheckpoint::load(&args.checkpoint).map_err(|e| CliError::artifact(&args.checkpoint, e))?;
    let mut model = ck.to_model().map_err(|e| CliError::artifact(&args.checkpoint, e))?;
    let root = required(args.data, &cfg.paths.data, "--data")?;
    let manifest = args.manifest.or_else(|| cfg.paths.manifest.clone());
    let mut samples = load_corpus(&root, manifest.as_deref())?;

    let which = args.split.unwrap_or(if args.split_file.is_some() { SplitArg::Test } else { SplitArg::All });
    if which != SplitArg::All {
        let path = args
            .split_file
            .as_deref()
            .ok_or_else(|| CliError::Usage("--split needs --split-file".into()))?;
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let spec: SplitSpec = serde_json::from_str(&text)?;
        let parts = spec.assign(&samples);
        samples = match which {
            SplitArg::Train => parts.train,
            SplitArg::Val => parts.val,
            _ => parts.test,
        };
    }

    let mode = model.mode();
    let wanted = Wanted { ridge: mode.uses_ridge(), ridge_flipped: false, freq: mode.uses_artifact() };
    let cache_path = args.cache.or_else(|| cfg.paths.cache.clone());
    let mut cache = match &cache_path {
        Some(p) => FeatureCache::load(p)?,
        None => FeatureCache::default(),
    };
    let items: Vec<_> = samples.iter().map(|s| (s.path.clone(), wanted)).collect();
    let (feats, stats) = extract_files(&items, &cfg.features, &mut cache, None);
    if let Some(p) = &cache_path {
        create_parent(p)?;
        cache.save(p)?;
    }
    log::info!("{}", stats.summary());
    let pairs: Vec<_> = feats.iter().zip(&samples).filter_map(|(f, s)| f.as_ref().map(|f| (f, s.label))).collect();
    let report = evaluate(&mut model, &pairs, cfg.train.batch_size.max(1))?;

    if which == SplitArg::Train {
        let summary = args.checkpoint.with_file_name("train.json");
        if let Ok(text) = fs::read_to_string(&summary) {
            if let Ok(s) = serde_json::from_str::<TrainSummary>(&text) {
                log::info!(
                    "training-split accuracy {:.4} vs best validation accuracy {:.4}",
                    report.accuracy,
                    s.best_val_acc
                );
            }
        }
    }

    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    if let Some(out) = &args.out {
        create_parent(out)?;
        fs::write(out, &json).map_err(|e| CliError::io(out, e))?;
    }
    if args.json {
        print!("{json}");
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}
