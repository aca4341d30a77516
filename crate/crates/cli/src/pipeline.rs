//! Feature extraction over many files with cache reuse, per-file failure
//! capture and optional dumps of the ridge preparation stages.

use std::fs;
use std::path::{Path, PathBuf};

use rfdfin_core::enhance::ridge_preprocess_stages;
use rfdfin_core::features::{extract, FeatureConfig, SampleFeatures, Wanted};
use rfdfin_core::imgproc::GrayImage;
use rfdfin_core::io::{encode_pgm, read_gray};
use rfdfin_core::par;
use walkdir::WalkDir;

use crate::cache::{content_key, CacheEntry, FeatureCache};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default)]
pub struct ExtractStats {
    pub total: usize,
    pub computed: usize,
    pub reused: usize,
    pub failed: Vec<(PathBuf, String)>,
    /// Files whose ridge feature came out empty.
    pub no_ridges: Vec<PathBuf>,
}

impl ExtractStats {
    pub fn summary(&self) -> String {
        format!(
            "{} images: {} computed, {} cached, {} failed, {} without ridges",
            self.total,
            self.computed,
            self.reused,
            self.failed.len(),
            self.no_ridges.len()
        )
    }
}

enum Outcome {
    Cached(SampleFeatures),
    Fresh(String, CacheEntry, SampleFeatures),
    Failed(String),
}

fn dump_stages(img: &GrayImage, cfg: &FeatureConfig, dir: &Path) -> CliResult<()> {
    let stages = ridge_preprocess_stages(img, &cfg.ridge)?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (name, stage) in stages.named() {
        let p = dir.join(format!("{name}.pgm"));
        fs::write(&p, encode_pgm(stage)).map_err(|e| CliError::io(&p, e))?;
    }
    Ok(())
}

fn process(path: &Path, wanted: Wanted, cfg: &FeatureConfig, cache: &FeatureCache, dump: Option<&Path>) -> Outcome {
    let run = || -> CliResult<Outcome> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let key = content_key(&bytes, cfg);
        let cached = cache.get(&key);
        if let Some(e) = cached.filter(|e| e.covers(wanted)) {
            return Ok(Outcome::Cached(e.features.clone()));
        }
        let img = read_gray(path)?;
        if let Some(dir) = dump {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
            dump_stages(&img, cfg, &dir.join(format!("{stem}-{}", &key[..12])))?;
        }
        let todo = cached.map_or(wanted, |e| e.missing(wanted));
        let fresh = CacheEntry::new(extract(&img, cfg, todo)?, todo);
        let mut full = cached.cloned().unwrap_or_default();
        full.merge(fresh.clone());
        Ok(Outcome::Fresh(key, fresh, full.features))
    };
    run().unwrap_or_else(|e| Outcome::Failed(e.to_string()))
}

/// Features for every `(path, wanted)` item in input order; `None` marks a
/// failed file. New results are added to `cache`.
pub fn extract_files(
    items: &[(PathBuf, Wanted)],
    cfg: &FeatureConfig,
    cache: &mut FeatureCache,
    dump: Option<&Path>,
) -> (Vec<Option<SampleFeatures>>, ExtractStats) {
    let outcomes = {
        let shared: &FeatureCache = cache;
        par::map(items, |(p, w)| process(p, *w, cfg, shared, dump))
    };
    let mut stats = ExtractStats { total: items.len(), ..Default::default() };
    let mut out = Vec::with_capacity(items.len());
    for ((path, wanted), o) in items.iter().zip(outcomes) {
        let features = match o {
            Outcome::Cached(f) => {
                stats.reused += 1;
                f
            }
            Outcome::Fresh(key, entry, f) => {
                stats.computed += 1;
                cache.insert(key, entry);
                f
            }
            Outcome::Failed(msg) => {
                log::warn!("{}: {msg}", path.display());
                stats.failed.push((path.clone(), msg));
                out.push(None);
                continue;
            }
        };
        if wanted.ridge && features.no_ridges() {
            stats.no_ridges.push(path.clone());
        }
        out.push(Some(features));
    }
    (out, stats)
}

/// Image files under `dir`, recursively, in path order.
pub fn list_images(dir: &Path) -> CliResult<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("{} is not a directory", dir.display())));
    }
    let mut out = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
        let ext = entry.path().extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if entry.file_type().is_file() && ext.is_some_and(|e| rfdfin_core::data::corpus::IMAGE_EXTENSIONS.contains(&e.as_str())) {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

pub fn read_images(paths: &[PathBuf]) -> CliResult<Vec<GrayImage>> {
    par::map(paths, |p| read_gray(p).map_err(|e| CliError::artifact(p, e))).into_iter().collect()
}
