use std::path::Path;

use rfdfin_core::antiforensic::{apply_pdc, apply_sdn, fit_power_dictionary, fit_sdn, sdn_plus_plus};
use rfdfin_core::io::{read_gray, write_gray};
use rfdfin_core::nn::checkpoint::encode_tensors;
use rfdfin_core::par;

use super::create_parent;
use crate::args::{Method, PerturbArgs};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::{list_images, read_images};
use crate::rundir::RunDir;

/// Fits the correction on `--real-dir` and `--fake-dir`, then writes the
/// corrected `--apply-dir` images as PNG under `--out-dir`, keeping their
/// relative paths. The fitted correction goes to `corrections.rfdf`.
pub fn perturb(args: PerturbArgs, cfg: RunConfig) -> CliResult<()> {
    let real = read_images(&list_images(&args.real_dir)?)?;
    let fake = read_images(&list_images(&args.fake_dir)?)?;
    let sdn = match args.method {
        Method::Sdn | Method::Sdnpp => Some(fit_sdn(&real, &fake, cfg.features.log_epsilon)?),
        Method::Pdc => None,
    };
    let dict = match args.method {
        Method::Pdc | Method::Sdnpp => Some(fit_power_dictionary(&real, cfg.perturb.radius_bins)?),
        Method::Sdn => None,
    };

    let mut run = RunDir::create(&args.out_dir, "perturb")?;
    run.write_config(&cfg)?;
    let mut tensors = Vec::new();
    if let Some(c) = &sdn {
        tensors.extend(c.to_tensors());
    }
    if let Some(d) = &dict {
        tensors.extend(d.to_tensors());
    }
    run.write("corrections.rfdf", encode_tensors(&tensors)?)?;

    let apply_dir = args.apply_dir.as_deref().unwrap_or(&args.fake_dir);
    let targets = list_images(apply_dir)?;
    let outputs = par::map(&targets, |p| {
        let img = read_gray(p).map_err(|e| CliError::artifact(p, e))?;
        let out = match (&sdn, &dict) {
            (Some(c), Some(d)) => sdn_plus_plus(&img, c, d),
            (Some(c), None) => apply_sdn(&img, c),
            (None, Some(d)) => apply_pdc(&img, d),
            (None, None) => unreachable!("every method fits a correction"),
        };
        out.map_err(|e| CliError::artifact(p, e))
    });
    for (p, img) in targets.iter().zip(outputs) {
        let rel = relative_png(p, apply_dir);
        let dest = run.file(&rel);
        create_parent(&dest)?;
        write_gray(&img?, &dest)?;
    }
    run.finish()?;
    println!("corrected {} images into {}", targets.len(), args.out_dir.display());
    Ok(())
}

fn relative_png(path: &Path, root: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path).with_extension("png");
    rel.to_string_lossy().replace('\\', "/")
}
