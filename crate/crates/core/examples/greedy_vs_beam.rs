//! Greedy and beam decoding of three-word suggestions from a briefly
//! trained character model.
//!
//!     cargo run --release --example greedy_vs_beam

use autocomplete::corpus::{synthetic_corpus, Granularity, Vocabulary};
use autocomplete::decoding::{suggest, DecodeOptions, Decoder};
use autocomplete::model::{build_model, ModelConfig};
use autocomplete::tensor::Rng;
use autocomplete::training::{train, TrainConfig};

fn main() -> autocomplete::Result<()> {
    let text = synthetic_corpus(0, 150_000);
    let vocab = Vocabulary::build(&text, Granularity::Character, None)?;
    let cfg = ModelConfig {
        vocab_size: vocab.len(),
        ..ModelConfig::desk_char()
    };
    let mut model = build_model(&cfg, &mut Rng::new(0))?;
    let tc = TrainConfig {
        max_steps: 1_000,
        warmup_steps: 50,
        ..TrainConfig::desk_for(&cfg)
    };
    train(&mut model, &vocab.encode_corpus(&text), &tc, None)?;

    for prompt in ["the history of ", "in the ", "it was "] {
        let ids = vocab.tokenize(prompt);
        for (decoder, beam_size) in [(Decoder::Greedy, 1), (Decoder::Beam, 5)] {
            let opts = DecodeOptions {
                decoder,
                beam_size,
                ..DecodeOptions::default()
            };
            let s = suggest(&model, &vocab, &ids, &opts)?;
            println!("{prompt:>16}| {decoder:?}: {:?} ({:?})", s.text(), s.stopped_by);
        }
    }
    Ok(())
}
