//! The character-model additions side by side: word-segment indices, the
//! causal pooling windows, and what each method costs in parameters.

use autocomplete::corpus::{Granularity, Vocabulary};
use autocomplete::methods::{word_segment_indices, WordCursor};
use autocomplete::model::{build_model, count_params, Method, ModelConfig};
use autocomplete::tensor::Rng;

fn main() -> autocomplete::Result<()> {
    let text = "the cat sat on the mat";
    let vocab = Vocabulary::build(text, Granularity::Character, None)?;
    let ids = vocab.tokenize(text);
    let space = vocab.space_id().expect("character vocabulary");

    let seg = word_segment_indices(&ids, space, 16);
    let (_, starts) = WordCursor::default().pool_window(&ids, space);
    println!("char  seg  pooled span");
    let chars: Vec<char> = text.chars().collect();
    for (t, c) in chars.iter().enumerate() {
        let span: String = chars[starts[t]..=t].iter().collect();
        println!("{c:>4}  {:>3}  {span:?}", seg[t]);
    }

    let base = ModelConfig {
        vocab_size: vocab.len(),
        ..ModelConfig::desk_char()
    };
    let mut rng = Rng::new(0);
    for method in [
        Method::Baseline,
        Method::WordSegment,
        Method::CharPoolSum,
        Method::CharPoolMean,
        Method::CharPoolMax,
    ] {
        let cfg = ModelConfig { method, ..base.clone() };
        let mut model = build_model::<f32>(&cfg, &mut rng)?;
        let probs = model.forward(&ids, false)?;
        println!(
            "{method:?}: {} params, output {:?}",
            count_params(&cfg).total(),
            probs.shape()
        );
    }
    Ok(())
}
