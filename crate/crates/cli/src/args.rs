use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rfdfin_core::nn::StreamMode;

/// Detects GAN-generated fingerprint images from ridge grayscale variation
/// and FFT artifacts.
#[derive(Debug, Parser)]
#[command(name = "rfdfin", version)]
pub struct Cli {
    /// Run configuration in TOML; flags override its values.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; falls back to the config file, then RFDFIN_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-image work; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic real/fake corpus.
    Synth(SynthArgs),
    /// Compute ridge and spectrum features into a cache file.
    Extract(ExtractArgs),
    /// Train a detector on a corpus.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Apply spectrum correction to fake images.
    Perturb(PerturbArgs),
    /// Average spectra of two image sets and map their difference.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub identities: Option<usize>,
    #[arg(long)]
    pub impressions: Option<usize>,
    /// Image side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Ridge,
    Spectrum,
    Both,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Corpus root; defaults to `paths.data`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Cache file to create or extend; defaults to `paths.cache`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Which::Both)]
    pub which: Which,
    /// Exit with status 2 when any image fails.
    #[arg(long)]
    pub strict: bool,
    /// Write every preparation stage of each computed image as PGM here.
    #[arg(long)]
    pub dump_stages: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Fused,
    RidgeOnly,
    ArtifactOnly,
}

impl From<ModeArg> for StreamMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fused => StreamMode::Fused,
            ModeArg::RidgeOnly => StreamMode::RidgeOnly,
            ModeArg::ArtifactOnly => StreamMode::ArtifactOnly,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory; defaults to `paths.run_dir`.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Feature cache; defaults to `paths.cache`, then the run directory.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// `split.json` written by `train`; restricts evaluation to one split.
    #[arg(long)]
    pub split_file: Option<PathBuf>,
    /// Which split to evaluate; `test` when a split file is given, else `all`.
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Write the report as JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the JSON report instead of the table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Sdn,
    Pdc,
    Sdnpp,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long, value_enum, default_value_t = Method::Sdnpp)]
    pub method: Method,
    /// Real images the correction is fitted to.
    #[arg(long)]
    pub real_dir: PathBuf,
    /// Fake images the correction is fitted from.
    #[arg(long)]
    pub fake_dir: PathBuf,
    /// Images to correct; defaults to `--fake-dir`.
    #[arg(long)]
    pub apply_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub real_dir: PathBuf,
    #[arg(long)]
    pub fake_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}
