//! The analytic estimator must rank configurations the way the graph
//! allocator does.

use autocomplete::analysis::{estimate_peak_memory, measure_forward_bytes, MemoryMode};
use autocomplete::model::ModelConfig;
use autocomplete::tensor::Rng;

#[test]
fn estimate_orders_like_measured_allocations() {
    let mut rng = Rng::new(21);
    let mut points = Vec::new();
    while points.len() < 40 {
        let word = rng.below(2) == 0;
        let base = if word {
            ModelConfig::desk_word(100 + rng.below(3000))
        } else {
            ModelConfig::desk_char()
        };
        let d_model = *rng.choose(&[16, 32, 64]);
        let mem = *rng.choose(&[0, 16, 64]);
        let cfg = ModelConfig {
            n_layer: 1 + rng.below(4),
            n_head: *rng.choose(&[1, 2, 4]),
            d_head: *rng.choose(&[8, 16]),
            d_model,
            d_embed: d_model,
            d_inner: *rng.choose(&[32, 64, 256]),
            tgt_len: *rng.choose(&[8, 16, 32]),
            mem_len: mem,
            eval_mem_len: mem,
            ..base
        };
        if cfg.validate().is_err() {
            continue;
        }
        let est = estimate_peak_memory(&cfg, 1, cfg.tgt_len, MemoryMode::Inference).total_peak_bytes as f64;
        let measured = measure_forward_bytes(&cfg, cfg.tgt_len, 0).unwrap() as f64;
        points.push((est, measured));
    }
    let mut concordant = 0;
    let mut pairs = 0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            pairs += 1;
            let agree = (a.0 - b.0) * (a.1 - b.1) >= 0.0;
            concordant += usize::from(agree);
            // clearly separated estimates must never be ranked the wrong way
            let ratio = a.0.max(b.0) / a.0.min(b.0);
            assert!(agree || ratio < 1.4, "estimates {a:?} vs {b:?} disagree with measurement");
        }
    }
    let share = concordant as f64 / pairs as f64;
    assert!(share > 0.95, "only {share:.3} of pairs ordered alike");
    for (est, measured) in &points {
        let rel = (est - measured).abs() / measured;
        assert!(rel < 0.3, "estimate {est} vs measured {measured}");
    }
}
