use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::{normalize_whitespace, Granularity, Vocabulary};
use crate::error::{Error, Result};

/// Minimum paragraph length (in words) eligible for prompt construction.
pub const MIN_PARAGRAPH_WORDS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptExample {
    pub source_id: String,
    pub context_percent: f64,
    /// Prompt as text. Character prompts end with a space so the model
    /// continues at a word boundary.
    pub prompt_text: String,
    pub prompt_tokens: Vec<u32>,
    pub ground_truth_words: Vec<String>,
}

impl PromptExample {
    pub fn prompt_words(&self) -> Vec<&str> {
        self.prompt_text.split_whitespace().collect()
    }
}

fn is_heading(line: &str) -> bool {
    let t = line.trim();
    t.len() >= 2 && t.starts_with('=') && t.ends_with('=')
}

/// Paragraphs are maximal runs of non-blank lines. Heading lines
/// (`= Title =`) are dropped and end the current run.
pub fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let flush = |current: &mut Vec<&str>, out: &mut Vec<String>| {
        if !current.is_empty() {
            out.push(normalize_whitespace(&current.join(" ")));
            current.clear();
        }
    };
    for line in text.lines() {
        if line.trim().is_empty() || is_heading(line) {
            flush(&mut current, &mut out);
        } else {
            current.push(line);
        }
    }
    flush(&mut current, &mut out);
    out
}

/// Number of prompt words for a paragraph of `word_count` words.
///
/// `ceil(context_percent * word_count)` with a tolerance so that products
/// such as `0.35 * 20` do not round up past the exact integer.
pub fn context_words(context_percent: f64, word_count: usize) -> usize {
    ((context_percent * word_count as f64) - 1e-9).ceil().max(1.0) as usize
}

pub fn make_prompts(
    text: &str,
    context_percent: f64,
    k_words: usize,
    vocab: &Vocabulary,
) -> Result<Vec<PromptExample>> {
    if !(context_percent > 0.0 && context_percent < 1.0) {
        return Err(Error::invalid(format!(
            "context_percent must lie in (0, 1), got {context_percent}"
        )));
    }
    if k_words == 0 {
        return Err(Error::invalid("k_words must be at least 1"));
    }
    let min_words = MIN_PARAGRAPH_WORDS.max(k_words + 1);
    let mut out = Vec::new();
    for (i, para) in paragraphs(text).iter().enumerate() {
        let words: Vec<&str> = para.split_whitespace().collect();
        if words.len() < min_words {
            continue;
        }
        let n_ctx = context_words(context_percent, words.len());
        if n_ctx + k_words > words.len() {
            continue;
        }
        let mut prompt_text = words[..n_ctx].join(" ");
        if vocab.granularity() == Granularity::Character {
            prompt_text.push(' ');
        }
        out.push(PromptExample {
            source_id: format!("p{i}"),
            context_percent,
            prompt_tokens: vocab.tokenize(&prompt_text),
            prompt_text,
            ground_truth_words: words[n_ctx..n_ctx + k_words]
                .iter()
                .map(|w| w.to_string())
                .collect(),
        });
    }
    Ok(out)
}

fn clean_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// One record per line: `source_id \t context_percent \t prompt \t truth`.
pub fn write_prompts(path: &Path, prompts: &[PromptExample]) -> Result<()> {
    let mut out = String::new();
    for p in prompts {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            clean_field(&p.source_id),
            p.context_percent,
            clean_field(&p.prompt_text),
            clean_field(&p.ground_truth_words.join(" "))
        )
        .expect("writing to a String");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_prompts(path: &Path, vocab: &Vocabulary) -> Result<Vec<PromptExample>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::invalid(format!(
                "{}:{}: expected 4 tab-separated fields, got {}",
                path.display(),
                n + 1,
                fields.len()
            )));
        }
        let context_percent: f64 = fields[1]
            .parse()
            .map_err(|_| Error::invalid(format!("bad context_percent `{}`", fields[1])))?;
        out.push(PromptExample {
            source_id: fields[0].to_string(),
            context_percent,
            prompt_text: fields[2].to_string(),
            prompt_tokens: vocab.tokenize(fields[2]),
            ground_truth_words: fields[3].split_whitespace().map(str::to_string).collect(),
        });
    }
    Ok(out)
}
