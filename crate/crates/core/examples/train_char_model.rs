//! Train a small character model on a synthetic corpus, save it and check
//! the reloaded copy computes the same distribution.
//!
//!     cargo run --release --example train_char_model -- [steps]

use autocomplete::corpus::{synthetic_corpus, Granularity, Vocabulary};
use autocomplete::model::{build_model, load_checkpoint, save_checkpoint, ModelConfig};
use autocomplete::tensor::Rng;
use autocomplete::training::{evaluate_nll, train, TrainConfig};

fn main() -> autocomplete::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let text = synthetic_corpus(0, 200_000);
    let (train_text, valid_text) = text.split_at(text.floor_char_boundary(text.len() * 9 / 10));
    let vocab = Vocabulary::build(train_text, Granularity::Character, None)?;

    let cfg = ModelConfig {
        vocab_size: vocab.len(),
        ..ModelConfig::desk_char()
    };
    let tc = TrainConfig {
        max_steps: steps,
        ..TrainConfig::desk_for(&cfg)
    };
    let mut model = build_model(&cfg, &mut Rng::new(tc.seed))?;
    println!("{} parameters", model.num_params());
    let report = train(&mut model, &vocab.encode_corpus(train_text), &tc, None)?;
    for r in report.trace.iter().step_by((steps / 10).max(1)) {
        println!("step {:4}  loss {:.4}  lr {:.5}", r.step, r.loss, r.lr);
    }
    let valid = vocab.encode_corpus(valid_text);
    let (nll, n) = evaluate_nll(&model, &valid, cfg.eval_mem_len)?;
    println!("valid nll/char {nll:.4} over {n} chars (ppl {:.2})", nll.exp());

    let dir = std::env::temp_dir().join("autocomplete_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("char.ckpt");
    save_checkpoint(&model, &path)?;
    let mut reloaded = load_checkpoint(&path)?;
    let probe = vocab.tokenize("the ");
    let a = model.forward(&probe, false)?;
    let b = reloaded.forward(&probe, false)?;
    println!("reloaded forward identical: {}", a == b);
    Ok(())
}
