//! Analytic peak-memory estimates next to the bytes this implementation
//! actually allocates for one forward pass.

use autocomplete::analysis::{estimate_peak_memory, measure_forward_bytes, MemoryMode};
use autocomplete::model::ModelConfig;

fn main() -> autocomplete::Result<()> {
    println!("{:<28} {:>12} {:>12} {:>12}", "config", "inference", "training", "measured");
    for (label, cfg) in [
        ("char 2L d32", ModelConfig::desk_char()),
        (
            "char 4L d64",
            ModelConfig {
                n_layer: 4,
                d_model: 64,
                d_embed: 64,
                d_head: 32,
                d_inner: 256,
                ..ModelConfig::desk_char()
            },
        ),
        ("word 2L d32 V=2000", ModelConfig::desk_word(2000)),
    ] {
        let inf = estimate_peak_memory(&cfg, 1, cfg.tgt_len, MemoryMode::Inference);
        let tr = estimate_peak_memory(&cfg, 8, cfg.tgt_len, MemoryMode::Training);
        let measured = measure_forward_bytes(&cfg, cfg.tgt_len, 0)?;
        println!(
            "{label:<28} {:>12} {:>12} {:>12}",
            inf.total_peak_bytes, tr.total_peak_bytes, measured
        );
    }
    Ok(())
}
