//! The full comparison at smoke scale: trains every variant at a matched
//! budget and writes the report directory.
//!
//!     cargo run --release --example pipeline_smoke -- [out_dir] [seed]

use autocomplete::corpus::synthetic_corpus;
use autocomplete::experiments::{run_pipeline, PipelineSettings, Preset};

fn main() -> autocomplete::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("autocomplete_smoke"));
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let text = synthetic_corpus(seed, 300_000);
    let report = run_pipeline(&text, &PipelineSettings::preset(Preset::Smoke, seed), &out)?;
    println!("budget {} params, char d_inner {}", report.budget, report.char_d_inner);
    for v in &report.variants {
        println!(
            "{:<18} EM {:5.2}  PM {:5.2}  loss {:.3} -> {:.3}",
            v.variant.name(),
            v.metrics.em_overall,
            v.metrics.pm_overall,
            v.first_loss_mean,
            v.last_loss_mean
        );
    }
    println!("report in {} ({:.1?})", out.display(), report.elapsed);
    Ok(())
}
