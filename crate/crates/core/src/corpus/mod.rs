//! Corpus ingestion: vocabularies, tokenization, prompt construction and
//! n-gram out-of-vocabulary statistics.

mod oov;
mod prompts;
mod synth;
mod vocab;

pub use oov::{oov_ngram_report, oov_prompt_score, NgramIndex, OovReport};
pub use prompts::{
    context_words, make_prompts, paragraphs, read_prompts, write_prompts, PromptExample,
    MIN_PARAGRAPH_WORDS,
};
pub use synth::synthetic_corpus;
pub use vocab::{normalize_whitespace, Granularity, Vocabulary, CHAR_SPACE_ID, CHAR_VOCAB_CAP, EOS, PAD, UNK};
