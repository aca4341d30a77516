//! Subcommand implementations. Each takes the effective configuration,
//! after the config file, flags and seed have been merged.

mod analyze;
mod eval;
mod extract;
mod perturb;
mod synth;
mod train;

use std::path::{Path, PathBuf};

use rfdfin_core::par;

pub use analyze::{analyze, AnalyzeStats, SpectrumStats};
pub use eval::eval;
pub use extract::extract;
pub use perturb::perturb;
pub use synth::synth;
pub use train::{train, TrainSummary};

use crate::args::{Cli, Command};
use crate::config::{RunConfig, SEED_ENV};
use crate::error::{CliError, CliResult};

/// Loads the configuration, resolves the seed and runs the subcommand
/// inside a pool of `--jobs` threads.
pub fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    let env = std::env::var(SEED_ENV).ok();
    cfg.resolve_seed(cli.seed, env.as_deref())?;
    let command = cli.command;
    par::with_jobs(cli.jobs, move || match command {
        Command::Synth(a) => synth(a, cfg),
        Command::Extract(a) => extract(a, cfg),
        Command::Train(a) => train(a, cfg),
        Command::Eval(a) => eval(a, cfg),
        Command::Perturb(a) => perturb(a, cfg),
        Command::Analyze(a) => analyze(a, cfg),
    })
}

/// The flag value, else the configured one, else a usage error naming the flag.
fn required(flag: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> CliResult<PathBuf> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| CliError::Usage(format!("{name} is required (or set it in the config file)")))
}

/// `path` with `suffix` appended to its file name.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e)),
        _ => Ok(()),
    }
}
