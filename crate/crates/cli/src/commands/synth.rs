use rfdfin_core::data::synth_corpus;
use rfdfin_core::io::write_gray;

use crate::args::SynthArgs;
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::rundir::RunDir;

/// Writes `<out>/<class>/<identity>/<impression>.png`, the layout the
/// corpus loader scans.
pub fn synth(args: SynthArgs, mut cfg: RunConfig) -> CliResult<()> {
    let spec = &mut cfg.synth;
    if let Some(n) = args.identities {
        spec.identities_per_class = n;
    }
    if let Some(n) = args.impressions {
        spec.impressions = n;
    }
    if let Some(s) = args.size {
        spec.width = s;
        spec.height = s;
    }
    let spec = cfg.synth;
    let mut run = RunDir::create(&args.out, "synth")?;
    run.write_config(&cfg)?;
    let samples = synth_corpus(&spec);
    for s in &samples {
        let rel = format!("{}/{}/{:02}.png", s.class.dir_name(), s.identity, s.impression);
        let p = run.file(&rel);
        crate::commands::create_parent(&p)?;
        write_gray(&s.image, &p)?;
    }
    run.finish()?;
    println!("wrote {} images to {}", samples.len(), args.out.display());
    Ok(())
}
