//! Command-line front end for the fingerprint GAN detector: corpus
//! generation, feature extraction, training, evaluation, spectrum
//! correction and spectrum analysis.

pub mod args;
pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod rundir;

pub use args::Cli;
pub use commands::run;
pub use config::RunConfig;
pub use error::{CliError, CliResult};
