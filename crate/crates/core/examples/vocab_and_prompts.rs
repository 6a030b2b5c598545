//! Character and word vocabularies over the same text, and the prompt /
//! ground-truth pairs cut from its paragraphs.

use autocomplete::corpus::{make_prompts, synthetic_corpus, Granularity, Vocabulary};

fn main() -> autocomplete::Result<()> {
    let text = synthetic_corpus(0, 20_000);
    let chars = Vocabulary::build(&text, Granularity::Character, None)?;
    let words = Vocabulary::build(&text, Granularity::Word, Some(500))?;
    println!("char vocab {}, word vocab {} (capped)", chars.len(), words.len());

    let ids = chars.tokenize("the cat");
    println!("{:?} -> {:?}", ids, chars.detokenize(&ids));

    for p in make_prompts(&text, 0.2, 3, &words)?.iter().take(3) {
        println!("[{}] {:?} => {:?}", p.source_id, p.prompt_text, p.ground_truth_words);
    }
    Ok(())
}
