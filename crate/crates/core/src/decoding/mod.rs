//! Suggestion generation: greedy and beam search with word-boundary
//! stopping.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::{Granularity, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{DecoderModel, Memory};
use crate::tensor::PROB_EPS;

/// Anything that yields next-token distributions from an incrementally fed
/// context. Sessions are cheap to clone so beams can fork them.
pub trait LanguageModel {
    type Session: Clone;

    fn new_session(&self) -> Self::Session;

    /// Longest chunk `feed` accepts at once.
    fn max_chunk(&self) -> usize;

    /// Appends `tokens` to the session and returns the distribution over
    /// the token that follows them.
    fn feed(&self, session: &mut Self::Session, tokens: &[u32]) -> Result<Vec<f64>>;
}

impl LanguageModel for DecoderModel {
    type Session = Memory<f32>;

    fn new_session(&self) -> Memory<f32> {
        Memory::default()
    }

    fn max_chunk(&self) -> usize {
        self.config().tgt_len
    }

    fn feed(&self, session: &mut Memory<f32>, tokens: &[u32]) -> Result<Vec<f64>> {
        let probs = self.forward_with(session, tokens, self.config().eval_mem_len)?;
        Ok(probs.row(probs.rows() - 1).iter().map(|&p| f64::from(p)).collect())
    }
}

/// A model given by a function from the full context to the next-token
/// distribution. Useful for scripted tests and demos.
pub struct FnModel<F> {
    f: F,
}

impl<F: Fn(&[u32]) -> Vec<f64>> FnModel<F> {
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F: Fn(&[u32]) -> Vec<f64>> LanguageModel for FnModel<F> {
    type Session = Vec<u32>;

    fn new_session(&self) -> Vec<u32> {
        Vec::new()
    }

    fn max_chunk(&self) -> usize {
        usize::MAX
    }

    fn feed(&self, session: &mut Vec<u32>, tokens: &[u32]) -> Result<Vec<f64>> {
        session.extend_from_slice(tokens);
        Ok((self.f)(session))
    }
}

/// Session primed with a prompt, holding the distribution of the first
/// token to generate.
#[derive(Clone, Debug)]
pub struct Primed<S> {
    pub session: S,
    pub next: Vec<f64>,
}

/// Feeds the prompt in chunks of at most `max_chunk` tokens.
pub fn prompt_feed<M: LanguageModel>(model: &M, prompt: &[u32]) -> Result<Primed<M::Session>> {
    if prompt.is_empty() {
        return Err(Error::invalid("prompt is empty"));
    }
    let mut session = model.new_session();
    let mut next = Vec::new();
    for chunk in prompt.chunks(model.max_chunk().max(1)) {
        next = model.feed(&mut session, chunk)?;
    }
    Ok(Primed { session, next })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    WordCount,
    MaxTokens,
    Eos,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub words: Vec<String>,
    pub raw_tokens: Vec<u32>,
    pub token_probs: Vec<f64>,
    /// Probability of each word: the product of its tokens' probabilities.
    pub word_probs: Vec<f64>,
    pub stopped_by: StopReason,
}

impl Suggestion {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoder {
    Greedy,
    Beam,
}

impl std::str::FromStr for Decoder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Decoder::Greedy),
            "beam" => Ok(Decoder::Beam),
            other => Err(Error::invalid(format!("unknown decoder `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub k_words: usize,
    /// Generation cap; `None` means 15 × k_words for characters and k_words
    /// for words.
    pub max_tokens: Option<usize>,
    pub decoder: Decoder,
    pub beam_size: usize,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            k_words: 3,
            max_tokens: None,
            decoder: Decoder::Greedy,
            beam_size: 5,
        }
    }
}

impl DecodeOptions {
    pub fn token_cap(&self, granularity: Granularity) -> usize {
        self.max_tokens.unwrap_or(match granularity {
            Granularity::Character => 15 * self.k_words,
            Granularity::Word => self.k_words,
        })
    }
}

/// Turns generated tokens into words and decides when to stop.
#[derive(Clone, Debug)]
struct WordTracker {
    granularity: Granularity,
    k_words: usize,
    words: Vec<String>,
    word_probs: Vec<f64>,
    buffer: String,
    buffer_p: f64,
    /// Finishing a word the prompt left open; not counted.
    completing: bool,
}

impl WordTracker {
    fn new(vocab: &Vocabulary, prompt: &[u32], k_words: usize) -> Self {
        let completing = vocab.granularity() == Granularity::Character
            && prompt.last().is_some_and(|&t| Some(t) != vocab.space_id());
        Self {
            granularity: vocab.granularity(),
            k_words,
            words: Vec::new(),
            word_probs: Vec::new(),
            buffer: String::new(),
            buffer_p: 1.0,
            completing,
        }
    }

    fn push(&mut self, vocab: &Vocabulary, token: u32, p: f64) -> Option<StopReason> {
        if token == vocab.eos_id() {
            return Some(StopReason::Eos);
        }
        let text = vocab.token(token).unwrap_or(crate::corpus::UNK);
        match self.granularity {
            Granularity::Word => {
                self.words.push(text.to_string());
                self.word_probs.push(p);
            }
            Granularity::Character => {
                if Some(token) == vocab.space_id() {
                    if self.completing {
                        self.completing = false;
                    } else if !self.buffer.is_empty() {
                        self.words.push(std::mem::take(&mut self.buffer));
                        self.word_probs.push(self.buffer_p * p);
                    }
                    self.buffer.clear();
                    self.buffer_p = 1.0;
                } else {
                    self.buffer.push_str(text);
                    self.buffer_p *= p;
                }
            }
        }
        (self.words.len() >= self.k_words).then_some(StopReason::WordCount)
    }

    /// Words so far plus any unfinished word.
    fn flush_partial(&mut self) {
        if !self.completing && !self.buffer.is_empty() && self.words.len() < self.k_words {
            self.words.push(std::mem::take(&mut self.buffer));
            self.word_probs.push(self.buffer_p);
        }
    }
}

/// Index of the largest probability; ties go to the lowest id.
pub fn argmax(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate().skip(1) {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

fn check_options(opts: &DecodeOptions) -> Result<()> {
    if opts.k_words == 0 {
        return Err(Error::invalid("k_words must be at least 1"));
    }
    if opts.beam_size == 0 {
        return Err(Error::invalid("beam_size must be at least 1"));
    }
    Ok(())
}

pub fn greedy_suggest<M: LanguageModel>(
    model: &M,
    vocab: &Vocabulary,
    prompt: &[u32],
    opts: &DecodeOptions,
) -> Result<Suggestion> {
    check_options(opts)?;
    let Primed { mut session, mut next } = prompt_feed(model, prompt)?;
    let mut tracker = WordTracker::new(vocab, prompt, opts.k_words);
    let cap = opts.token_cap(vocab.granularity());
    let mut raw = Vec::new();
    let mut probs = Vec::new();
    let mut stop = StopReason::MaxTokens;
    while raw.len() < cap {
        let tok = argmax(&next) as u32;
        let p = next[tok as usize];
        raw.push(tok);
        probs.push(p);
        if let Some(reason) = tracker.push(vocab, tok, p) {
            stop = reason;
            break;
        }
        if raw.len() < cap {
            next = model.feed(&mut session, &[tok])?;
        }
    }
    if stop != StopReason::WordCount {
        tracker.flush_partial();
    }
    Ok(Suggestion {
        words: tracker.words,
        raw_tokens: raw,
        token_probs: probs,
        word_probs: tracker.word_probs,
        stopped_by: stop,
    })
}

#[derive(Clone)]
struct Hyp<S> {
    session: S,
    next: Vec<f64>,
    tracker: WordTracker,
    tokens: Vec<u32>,
    probs: Vec<f64>,
    logprob: f64,
}

impl<S> Hyp<S> {
    fn score(&self) -> f64 {
        self.logprob / self.tokens.len().max(1) as f64
    }

    fn finish(mut self, stop: StopReason) -> (f64, Suggestion) {
        if stop != StopReason::WordCount {
            self.tracker.flush_partial();
        }
        (
            self.score(),
            Suggestion {
                words: self.tracker.words,
                raw_tokens: self.tokens,
                token_probs: self.probs,
                word_probs: self.tracker.word_probs,
                stopped_by: stop,
            },
        )
    }
}

/// Length-normalized beam search (score = log-probability / generated
/// tokens). A hypothesis is final once it completes `k_words` words, emits
/// end-of-sequence or reaches the token cap. Candidate ties resolve by
/// higher token probability, then lower token id, so a beam of one
/// reproduces greedy decoding.
pub fn beam_suggest<M: LanguageModel>(
    model: &M,
    vocab: &Vocabulary,
    prompt: &[u32],
    opts: &DecodeOptions,
) -> Result<Suggestion> {
    check_options(opts)?;
    let primed = prompt_feed(model, prompt)?;
    let cap = opts.token_cap(vocab.granularity());
    let mut live = vec![Hyp {
        session: primed.session,
        next: primed.next,
        tracker: WordTracker::new(vocab, prompt, opts.k_words),
        tokens: Vec::new(),
        probs: Vec::new(),
        logprob: 0.0,
    }];
    let mut finished: Vec<(f64, Suggestion)> = Vec::new();

    while !live.is_empty() && finished.len() < opts.beam_size {
        // (score, p, token, hyp)
        let mut cands: Vec<(f64, f64, u32, usize)> = Vec::new();
        for (h, hyp) in live.iter().enumerate() {
            let len = (hyp.tokens.len() + 1) as f64;
            for (tok, &p) in hyp.next.iter().enumerate() {
                let lp = hyp.logprob + p.max(PROB_EPS).ln();
                cands.push((lp / len, p, tok as u32, h));
            }
        }
        cands.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal))
                .then(a.2.cmp(&b.2))
                .then(a.3.cmp(&b.3))
        });
        let slots = opts.beam_size - finished.len();
        let mut next_live = Vec::with_capacity(slots);
        for &(_, p, tok, h) in cands.iter().take(slots) {
            let mut hyp = Hyp {
                session: live[h].session.clone(),
                next: Vec::new(),
                tracker: live[h].tracker.clone(),
                tokens: live[h].tokens.clone(),
                probs: live[h].probs.clone(),
                logprob: live[h].logprob + p.max(PROB_EPS).ln(),
            };
            hyp.tokens.push(tok);
            hyp.probs.push(p);
            let stop = hyp
                .tracker
                .push(vocab, tok, p)
                .or((hyp.tokens.len() >= cap).then_some(StopReason::MaxTokens));
            match stop {
                Some(reason) => finished.push(hyp.finish(reason)),
                None => {
                    hyp.next = model.feed(&mut hyp.session, &[tok])?;
                    next_live.push(hyp);
                }
            }
        }
        live = next_live;
    }
    // earliest finisher wins ties
    let mut best: Option<(f64, Suggestion)> = None;
    for (score, s) in finished {
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, s));
        }
    }
    Ok(best.expect("beam search always finishes a hypothesis").1)
}

pub fn suggest<M: LanguageModel>(
    model: &M,
    vocab: &Vocabulary,
    prompt: &[u32],
    opts: &DecodeOptions,
) -> Result<Suggestion> {
    match opts.decoder {
        Decoder::Greedy => greedy_suggest(model, vocab, prompt, opts),
        Decoder::Beam => beam_suggest(model, vocab, prompt, opts),
    }
}
