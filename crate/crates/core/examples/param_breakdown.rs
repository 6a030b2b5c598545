//! Where the parameters go: mean component shares over sampled word and
//! character architectures, plus the published preset sizes.

use autocomplete::analysis::{breakdown_study, sample_architectures, ArchitectureSpace, BREAKDOWN_SEED};
use autocomplete::corpus::Granularity;
use autocomplete::model::{count_params, Component, ModelConfig, PresetSize};

fn main() -> autocomplete::Result<()> {
    let space = ArchitectureSpace::breakdown_space();
    for g in [Granularity::Word, Granularity::Character] {
        let cfgs = sample_architectures(&space, 100, BREAKDOWN_SEED, g)?;
        let study = breakdown_study(&cfgs)?;
        print!("{g:?}:");
        for c in Component::ALL {
            print!("  {c:?} {:.2}%", study.mean_share(c));
        }
        println!();
    }

    println!("\npreset    word params    char params");
    for size in [PresetSize::M5, PresetSize::M10, PresetSize::M20, PresetSize::M80] {
        let word = count_params(&ModelConfig::word_preset(size)).total();
        let chars = count_params(&ModelConfig::char_preset(size)?).total();
        println!("{size:?}\t{word:>12}\t{chars:>12}");
    }
    Ok(())
}
