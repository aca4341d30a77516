//! Run configuration, read from TOML. Command-line flags override file
//! values, and the effective result is written next to every output.

use std::fs;
use std::path::{Path, PathBuf};

use rfdfin_core::data::SynthCorpusSpec;
use rfdfin_core::features::FeatureConfig;
use rfdfin_core::nn::{ModelConfig, StreamMode, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "RFDFIN_SEED";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Corpus root with `real/` and `fake/` identity trees.
    pub data: Option<PathBuf>,
    /// Optional `path,label,identity` CSV overriding the tree layout.
    pub manifest: Option<PathBuf>,
    /// Feature cache; defaults to `features.rfdf` in the run directory.
    pub cache: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Train, validation and test shares of the identities in each class.
    pub fractions: [f64; 3],
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { fractions: [4.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub mode: StreamMode,
    pub arch: ModelConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { mode: StreamMode::Fused, arch: ModelConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbConfig {
    pub radius_bins: usize,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self { radius_bins: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    /// Normalized radius beyond which `hf_logmag_gap` is averaged.
    pub hf_cutoff: f64,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self { hf_cutoff: 0.25 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed. When set it replaces the seeds of the train and synth
    /// sections and drives the identity split.
    pub seed: Option<u64>,
    pub paths: Paths,
    pub features: FeatureConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub perturb: PerturbConfig,
    pub analyze: AnalyzeConfig,
    pub synth: SynthCorpusSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// File contents, or defaults when no file is given.
    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_toml()?).map_err(|e| CliError::io(path, e))
    }

    /// Seed precedence: flag, then config file, then the environment.
    /// The resolved seed is copied into every seeded section.
    pub fn resolve_seed(&mut self, flag: Option<u64>, env: Option<&str>) -> CliResult<u64> {
        let env_seed = match env {
            Some(s) => Some(s.trim().parse::<u64>().map_err(|_| CliError::Config(format!("{SEED_ENV}={s:?} is not a u64")))?),
            None => None,
        };
        let seed = flag.or(self.seed).or(env_seed).unwrap_or(self.train.seed);
        self.seed = Some(seed);
        self.train.seed = seed;
        self.synth.seed = seed;
        Ok(seed)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.arch.validate()?;
        if self.features.segment_len != self.model.arch.feature_len {
            return Err(CliError::Config(format!(
                "features.segment_len ({}) must equal model.arch.feature_len ({})",
                self.features.segment_len, self.model.arch.feature_len
            )));
        }
        let f = self.split.fractions;
        if f.iter().any(|x| !(0.0..=1.0).contains(x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CliError::Config(format!("split.fractions {f:?} must lie in [0, 1] and sum to 1")));
        }
        if let Some(size) = self.features.input_size {
            if size.contains(&0) {
                return Err(CliError::Config(format!("features.input_size {size:?} must be positive")));
            }
        }
        if self.train.batch_size < 2 {
            return Err(CliError::Config("train.batch_size must be at least 2".into()));
        }
        Ok(())
    }

    /// First eight bytes of the SHA-256 of the TOML form.
    pub fn hash(&self) -> CliResult<u64> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("[train]\nlearning_rate = 0.1").is_err());
        assert!(RunConfig::from_toml("[model.arch]\nwidth = 3").is_err());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml("[train]\nlr = 0.01\n[model]\nmode = \"ridge_only\"").unwrap();
        assert_eq!(c.train.lr, 0.01);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.model.mode, StreamMode::RidgeOnly);
        assert_eq!(c.features.ridge.threshold, 100);
    }

    #[test]
    fn seed_precedence() {
        let mut c = RunConfig { seed: Some(5), ..Default::default() };
        assert_eq!(c.resolve_seed(Some(9), Some("7")).unwrap(), 9);
        assert_eq!((c.train.seed, c.synth.seed), (9, 9));
        let mut c = RunConfig { seed: Some(5), ..Default::default() };
        assert_eq!(c.resolve_seed(None, Some("7")).unwrap(), 5);
        let mut c = RunConfig::default();
        assert_eq!(c.resolve_seed(None, Some("7")).unwrap(), 7);
        let mut c = RunConfig::default();
        assert_eq!(c.resolve_seed(None, None).unwrap(), 0);
        assert!(RunConfig::default().resolve_seed(None, Some("x")).is_err());
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let mut c = RunConfig::default();
        c.features.segment_len = 64;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.split.fractions = [0.5, 0.5, 0.5];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.features.input_size = Some([256, 0]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn input_size_round_trips() {
        let c = RunConfig::from_toml("[features]\ninput_size = [256, 240]\n").unwrap();
        assert_eq!(c.features.input_size, Some([256, 240]));
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        assert!(!RunConfig::default().to_toml().unwrap().contains("input_size"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.train.lr = 0.5;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }
}
