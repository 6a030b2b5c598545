//! ExactMatch / PartialMatch, likelihood metrics and the
//! perplexity-versus-ExactMatch table.

mod theory;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{PromptExample, Vocabulary};
use crate::decoding::{suggest, DecodeOptions, LanguageModel, Suggestion};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor, PROB_EPS};

pub use theory::{em_ppl_theory_table, TheoryRow};

/// 1 iff the first `n` predicted words equal the first `n` truth words.
pub fn exact_match_at_n<S: AsRef<str>, U: AsRef<str>>(pred: &[S], truth: &[U], n: usize) -> u8 {
    if n == 0 || pred.len() < n || truth.len() < n {
        return 0;
    }
    pred[..n]
        .iter()
        .zip(&truth[..n])
        .all(|(p, t)| p.as_ref() == t.as_ref()) as u8
}

/// Position-wise character agreement over the first `n` word pairs,
/// divided by the number of truth characters in those words.
pub fn partial_match_at_n<S: AsRef<str>, U: AsRef<str>>(pred: &[S], truth: &[U], n: usize) -> f64 {
    let mut matched = 0usize;
    let mut total = 0usize;
    for (i, t) in truth.iter().take(n).enumerate() {
        let t = t.as_ref();
        total += t.chars().count();
        if let Some(p) = pred.get(i) {
            matched += p
                .as_ref()
                .chars()
                .zip(t.chars())
                .filter(|(a, b)| a == b)
                .count();
        }
    }
    if total == 0 {
        0.0
    } else {
        matched as f64 / total as f64
    }
}

/// How ExactMatch@Overall weighs each completion length n.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverallWeighting {
    /// Weight n: longer completions count more.
    #[default]
    Linear,
    Uniform,
}

impl OverallWeighting {
    fn weight(self, n: usize) -> f64 {
        match self {
            OverallWeighting::Linear => n as f64,
            OverallWeighting::Uniform => 1.0,
        }
    }

    /// Weighted average of per-n values (index n-1).
    pub fn combine(self, per_n: &[f64]) -> f64 {
        let (num, den) = per_n.iter().enumerate().fold((0.0, 0.0), |(a, b), (i, &v)| {
            let w = self.weight(i + 1);
            (a + w * v, b + w)
        });
        num / den
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub prompt_id: String,
    pub context_percent: f64,
    /// `em_at[n - 1]` is ExactMatch@n.
    pub em_at: Vec<u8>,
    pub pm_at: Vec<f64>,
    pub suggestion: Suggestion,
    pub ground_truth_words: Vec<String>,
    pub oov_score: Option<f64>,
}

impl EvalRecord {
    pub fn new(prompt: &PromptExample, suggestion: Suggestion, k: usize) -> Self {
        let truth = &prompt.ground_truth_words;
        Self {
            prompt_id: prompt.source_id.clone(),
            context_percent: prompt.context_percent,
            em_at: (1..=k).map(|n| exact_match_at_n(&suggestion.words, truth, n)).collect(),
            pm_at: (1..=k).map(|n| partial_match_at_n(&suggestion.words, truth, n)).collect(),
            suggestion,
            ground_truth_words: truth.clone(),
            oov_score: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub em_overall: f64,
    pub pm_overall: f64,
    pub em_at_n: Vec<f64>,
    pub pm_at_n: Vec<f64>,
    pub nll_per_token: Option<f64>,
    pub perplexity: Option<f64>,
    pub n_prompts: usize,
    pub weighting: OverallWeighting,
}

fn per_n_means(records: &[EvalRecord], k: usize, f: impl Fn(&EvalRecord, usize) -> f64) -> Vec<f64> {
    (0..k)
        .map(|i| 100.0 * records.iter().map(|r| f(r, i)).sum::<f64>() / records.len() as f64)
        .collect()
}

fn check_records(records: &[EvalRecord], k: usize) -> Result<()> {
    if records.is_empty() {
        return Err(Error::invalid("no evaluation records"));
    }
    if let Some(r) = records.iter().find(|r| r.em_at.len() < k || r.pm_at.len() < k) {
        return Err(Error::invalid(format!(
            "record {} lacks match values up to n = {k}",
            r.prompt_id
        )));
    }
    Ok(())
}

/// ExactMatch@Overall in percent.
pub fn em_overall(records: &[EvalRecord], k: usize, weighting: OverallWeighting) -> Result<f64> {
    check_records(records, k)?;
    Ok(weighting.combine(&per_n_means(records, k, |r, i| f64::from(r.em_at[i]))))
}

pub fn summarize(records: &[EvalRecord], k: usize, weighting: OverallWeighting) -> Result<MetricSummary> {
    check_records(records, k)?;
    let em_at_n = per_n_means(records, k, |r, i| f64::from(r.em_at[i]));
    let pm_at_n = per_n_means(records, k, |r, i| r.pm_at[i]);
    Ok(MetricSummary {
        em_overall: weighting.combine(&em_at_n),
        pm_overall: weighting.combine(&pm_at_n),
        em_at_n,
        pm_at_n,
        nll_per_token: None,
        perplexity: None,
        n_prompts: records.len(),
        weighting,
    })
}

/// Mean NLL (nats, probabilities clamped at 1e-9) of `targets` under the
/// row distributions `probs`, and its exponential.
pub fn nll_and_perplexity<T: Scalar>(probs: &Tensor<T>, targets: &[usize]) -> Result<(f64, f64)> {
    if probs.shape().len() != 2 || probs.rows() != targets.len() || targets.is_empty() {
        return Err(Error::shape("nll", probs.shape(), &[targets.len()]));
    }
    let mut total = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let p = probs
            .row(r)
            .get(t)
            .ok_or_else(|| Error::TokenOutOfRange {
                id: t,
                vocab_size: probs.cols(),
            })?
            .as_f64();
        total -= p.max(PROB_EPS).ln();
    }
    let nll = total / targets.len() as f64;
    Ok((nll, nll.exp()))
}

/// Word-level perplexity from a character model's summed NLL.
pub fn char_ppl_to_word_ppl(total_char_nll: f64, n_words: usize) -> Result<f64> {
    if n_words == 0 {
        return Err(Error::invalid("n_words must be at least 1"));
    }
    Ok((total_char_nll / n_words as f64).exp())
}

/// Decodes every prompt (in parallel) and scores it against its truth.
pub fn evaluate_prompts<M>(
    model: &M,
    vocab: &Vocabulary,
    prompts: &[PromptExample],
    opts: &DecodeOptions,
) -> Result<Vec<EvalRecord>>
where
    M: LanguageModel + Sync,
{
    prompts
        .par_iter()
        .map(|p| {
            let s = suggest(model, vocab, &p.prompt_tokens, opts)?;
            Ok(EvalRecord::new(p, s, opts.k_words))
        })
        .collect()
}

#[derive(Serialize)]
struct RecordRow<'a> {
    prompt_id: &'a str,
    context_percent: f64,
    prediction: String,
    ground_truth: String,
    em: String,
    pm: String,
    stopped_by: String,
    oov_score: Option<f64>,
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

/// One CSV row per record; per-n values are `;`-separated.
pub fn write_records_csv(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(RecordRow {
            prompt_id: &r.prompt_id,
            context_percent: r.context_percent,
            prediction: r.suggestion.text(),
            ground_truth: r.ground_truth_words.join(" "),
            em: join(&r.em_at),
            pm: join(&r.pm_at),
            stopped_by: serde_json::to_value(r.suggestion.stopped_by)?
                .as_str()
                .unwrap_or_default()
                .to_string(),
            oov_score: r.oov_score,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_json(path: &Path, summary: &MetricSummary) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(summary)?)?;
    Ok(())
}
