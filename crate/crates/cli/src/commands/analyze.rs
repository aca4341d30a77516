use std::fmt::Write as _;

use rfdfin_core::io::write_gray;
use rfdfin_core::nn::checkpoint::encode_tensors;
use rfdfin_core::nn::Tensor;
use rfdfin_core::spectrum::{high_freq_mean, mean_spectrum, spectrum_diff, DiffStats, Spectrum2D, SpectrumKind};
use serde::{Deserialize, Serialize};

use crate::args::AnalyzeArgs;
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::pipeline::{list_images, read_images};
use crate::rundir::RunDir;

/// One spectrum family in `stats.json`. Differences are real minus fake.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumStats {
    pub diff: DiffStats,
    pub hf_logmag_real: f64,
    pub hf_logmag_fake: f64,
    /// Positive when fakes lack high-frequency energy.
    pub hf_logmag_gap: f64,
}

/// Contents of `stats.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeStats {
    pub real_images: usize,
    pub fake_images: usize,
    pub width: usize,
    pub height: usize,
    pub hf_cutoff: f64,
    pub fft: SpectrumStats,
    pub dct: SpectrumStats,
    /// Same as `fft.hf_logmag_gap`.
    pub hf_logmag_gap: f64,
}

fn tensor(s: &Spectrum2D) -> Tensor {
    Tensor::new(&[s.height, s.width], s.values.iter().map(|&v| v as f32).collect()).expect("plane shape")
}

/// Writes `<prefix>_{real,fake,diff}.png` heatmaps, FFT ones DC-centred,
/// with their value ranges in `heatmap_ranges.txt`, raw planes in
/// `spectra.rfdf` and summary numbers in `stats.json`.
pub fn analyze(args: AnalyzeArgs, cfg: RunConfig) -> CliResult<()> {
    let real = read_images(&list_images(&args.real_dir)?)?;
    let fake = read_images(&list_images(&args.fake_dir)?)?;
    let eps = cfg.features.log_epsilon;
    let cutoff = cfg.analyze.hf_cutoff;
    let mut run = RunDir::create(&args.out_dir, "analyze")?;
    run.write_config(&cfg)?;

    let mut ranges = String::new();
    let mut tensors = Vec::new();
    let mut family = |kind: SpectrumKind, prefix: &str, center: bool| -> CliResult<(SpectrumStats, usize, usize)> {
        let r = mean_spectrum(&real, kind, eps)?;
        let f = mean_spectrum(&fake, kind, eps)?;
        let (d, diff) = spectrum_diff(&r, &f)?;
        for (name, s) in [("real", &r), ("fake", &f), ("diff", &d)] {
            let (img, lo, hi) = s.to_heatmap(center);
            let file = format!("{prefix}_{name}.png");
            writeln!(ranges, "{file} {lo:e} {hi:e}").expect("string write");
            write_gray(&img, &run.file(&file))?;
            tensors.push((format!("{prefix}.{name}"), tensor(s)));
        }
        let (hr, hf) = (high_freq_mean(&r, cutoff), high_freq_mean(&f, cutoff));
        Ok((SpectrumStats { diff, hf_logmag_real: hr, hf_logmag_fake: hf, hf_logmag_gap: hr - hf }, r.width, r.height))
    };
    let (fft, width, height) = family(SpectrumKind::FftLogmag, "fft", true)?;
    let (dct, _, _) = family(SpectrumKind::DctLogmag, "dct", false)?;

    run.write("heatmap_ranges.txt", ranges)?;
    run.write("spectra.rfdf", encode_tensors(&tensors)?)?;
    let stats = AnalyzeStats {
        real_images: real.len(),
        fake_images: fake.len(),
        width,
        height,
        hf_cutoff: cutoff,
        fft,
        dct,
        hf_logmag_gap: fft.hf_logmag_gap,
    };
    run.write_json("stats.json", &stats)?;
    run.finish()?;
    println!(
        "FFT diff L2 {:.4}, high-frequency log-magnitude gap {:.4}",
        stats.fft.diff.l2, stats.hf_logmag_gap
    );
    Ok(())
}
