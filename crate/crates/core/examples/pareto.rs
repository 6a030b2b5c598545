//! Accuracy against estimated memory: which models are on the frontier.
//! The ExactMatch values here are illustrative inputs.

use autocomplete::analysis::{estimate_peak_memory, pareto_table, MemoryMode, ParetoEntry};
use autocomplete::model::{count_params, ModelConfig, PresetSize};

fn main() -> autocomplete::Result<()> {
    let mut entries = Vec::new();
    for (size, word_em, char_em) in [
        (PresetSize::M5, 9.0, 10.5),
        (PresetSize::M10, 11.0, 12.0),
        (PresetSize::M20, 12.5, 12.8),
    ] {
        let word = ModelConfig::word_preset(size);
        let chars = ModelConfig::char_preset(size)?;
        for (label, cfg, em) in [("word", word, word_em), ("char", chars, char_em)] {
            let mem = estimate_peak_memory(&cfg, 1, cfg.tgt_len, MemoryMode::Inference);
            entries.push(ParetoEntry {
                label: format!("{label}-{size:?}"),
                params: count_params(&cfg).total(),
                memory_bytes: mem.total_peak_bytes,
                em_overall: em,
            });
        }
    }
    for r in pareto_table(&entries)? {
        let mark = if r.pareto_optimal { "*" } else { " " };
        println!("{mark} {:<10} {:>10} params {:>12} bytes  EM {:.1}", r.label, r.params, r.memory_bytes, r.em_overall);
    }
    Ok(())
}
