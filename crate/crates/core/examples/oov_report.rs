//! How much of a test text's n-grams the training text never saw, and a
//! per-prompt OOV score used to rank prompts.

use autocomplete::corpus::{
    make_prompts, oov_ngram_report, oov_prompt_score, synthetic_corpus, Granularity, NgramIndex, Vocabulary,
};

fn main() -> autocomplete::Result<()> {
    let train = synthetic_corpus(1, 100_000);
    let test = synthetic_corpus(2, 20_000);
    let report = oov_ngram_report(&train, &test, 3)?;
    for (n, pct) in &report.per_n {
        let (oov, total) = report.counts[n];
        println!("{n}-grams: {oov}/{total} unseen ({pct:.2}%)");
    }

    let vocab = Vocabulary::build(&train, Granularity::Word, None)?;
    let index = NgramIndex::build(&train, 3);
    let prompts = make_prompts(&test, 0.2, 3, &vocab)?;
    for p in prompts.iter().take(5) {
        let score = oov_prompt_score(&p.prompt_words(), &index, 3);
        println!("{score:6.2}%  {}", p.prompt_text);
    }
    Ok(())
}
