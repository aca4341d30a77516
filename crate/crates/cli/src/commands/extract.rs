use std::fs;

use rfdfin_core::data::load_corpus;
use rfdfin_core::features::Wanted;

use super::{create_parent, required, sidecar};
use crate::args::{ExtractArgs, Which};
use crate::cache::FeatureCache;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::extract_files;

/// Extends the cache at `--out`. Writes `<out>.noridges.txt` listing images
/// without a usable ridge and `<out>.config.toml` with the effective config.
pub fn extract(args: ExtractArgs, cfg: RunConfig) -> CliResult<()> {
    let root = required(args.data, &cfg.paths.data, "--data")?;
    let manifest = args.manifest.or_else(|| cfg.paths.manifest.clone());
    let out = required(args.out, &cfg.paths.cache, "--out")?;
    let samples = load_corpus(&root, manifest.as_deref())?;
    let flip = cfg.train.flip_prob > 0.0;
    let wanted = match args.which {
        Which::Ridge => Wanted { ridge: true, ridge_flipped: flip, freq: false },
        Which::Spectrum => Wanted { ridge: false, ridge_flipped: false, freq: true },
        Which::Both => Wanted { ridge: true, ridge_flipped: flip, freq: true },
    };
    let mut cache = FeatureCache::load(&out)?;
    let items: Vec<_> = samples.iter().map(|s| (s.path.clone(), wanted)).collect();
    let (_, stats) = extract_files(&items, &cfg.features, &mut cache, args.dump_stages.as_deref());
    create_parent(&out)?;
    cache.save(&out)?;

    let mut list = String::new();
    for p in &stats.no_ridges {
        list.push_str(&p.display().to_string());
        list.push('\n');
    }
    let noridges = sidecar(&out, ".noridges.txt");
    fs::write(&noridges, list).map_err(|e| CliError::io(&noridges, e))?;
    cfg.save(&sidecar(&out, ".config.toml"))?;

    println!("{}", stats.summary());
    if args.strict && !stats.failed.is_empty() {
        return Err(CliError::StrictExtraction { failed: stats.failed.len(), total: stats.total });
    }
    Ok(())
}
