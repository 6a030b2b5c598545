use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SEP: char = '\u{1f}';

fn ngrams<'a>(words: &'a [&'a str], n: usize) -> impl Iterator<Item = String> + 'a {
    words.windows(n).map(|w| {
        let mut s = String::new();
        for (i, part) in w.iter().enumerate() {
            if i > 0 {
                s.push(SEP);
            }
            s.push_str(part);
        }
        s
    })
}

/// Set of word n-grams (n = 1..=max_n) seen in a training text.
#[derive(Clone, Debug, Default)]
pub struct NgramIndex {
    sets: Vec<HashSet<String>>,
}

impl NgramIndex {
    pub fn build(text: &str, max_n: usize) -> Self {
        let words: Vec<&str> = text.split_whitespace().collect();
        let sets = (1..=max_n).map(|n| ngrams(&words, n).collect()).collect();
        Self { sets }
    }

    pub fn max_n(&self) -> usize {
        self.sets.len()
    }

    pub fn contains(&self, gram: &[&str]) -> bool {
        let n = gram.len();
        if n == 0 || n > self.sets.len() {
            return false;
        }
        self.sets[n - 1].contains(&gram.join(&SEP.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OovReport {
    /// Percentage of unique test n-grams never seen in training, per n.
    pub per_n: BTreeMap<usize, f64>,
    /// `(oov unique n-grams, unique test n-grams)` per n.
    pub counts: BTreeMap<usize, (usize, usize)>,
}

/// Percentage of unique test n-grams absent from the training text, for
/// n = 1..=max_n. Orders the test text is too short for are left out.
pub fn oov_ngram_report(train: &str, test: &str, max_n: usize) -> Result<OovReport> {
    if train.trim().is_empty() || test.trim().is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let index = NgramIndex::build(train, max_n);
    let words: Vec<&str> = test.split_whitespace().collect();
    let mut report = OovReport::default();
    for n in 1..=max_n {
        if words.len() < n {
            continue;
        }
        let unique: HashSet<String> = ngrams(&words, n).collect();
        let oov = unique
            .iter()
            .filter(|g| !index.sets[n - 1].contains(*g))
            .count();
        report.counts.insert(n, (oov, unique.len()));
        report
            .per_n
            .insert(n, 100.0 * oov as f64 / unique.len() as f64);
    }
    Ok(report)
}

/// Fraction of a prompt's word n-grams (every occurrence, n = 1..=max_n
/// pooled) that the training index has never seen.
pub fn oov_prompt_score(prompt_words: &[&str], index: &NgramIndex, max_n: usize) -> f64 {
    let max_n = max_n.min(index.max_n());
    let mut total = 0usize;
    let mut missing = 0usize;
    for n in 1..=max_n {
        for w in prompt_words.windows(n) {
            total += 1;
            if !index.contains(w) {
                missing += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        missing as f64 / total as f64
    }
}
