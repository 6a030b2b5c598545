use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";

/// Id cap for character vocabularies, specials included.
pub const CHAR_VOCAB_CAP: usize = 128;

/// Id of the space token in every character vocabulary.
pub const CHAR_SPACE_ID: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Character,
    Word,
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "character" | "char" => Ok(Granularity::Character),
            "word" => Ok(Granularity::Word),
            other => Err(Error::invalid(format!("unknown granularity `{other}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    granularity: Granularity,
    tokens: Vec<String>,
}

/// Token/id map. Specials occupy ids 0..3 (`<pad>`, `<unk>`, `<eos>`);
/// character vocabularies always hold the space at id 3.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    granularity: Granularity,
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile {
            granularity: v.granularity,
            tokens: v.tokens,
        }
    }
}

impl TryFrom<VocabFile> for Vocabulary {
    type Error = Error;

    fn try_from(f: VocabFile) -> Result<Self> {
        Vocabulary::from_tokens(f.granularity, f.tokens)
    }
}

fn is_printable(c: char) -> bool {
    !c.is_control() && (c == ' ' || !c.is_whitespace())
}

impl Vocabulary {
    pub fn from_tokens(granularity: Granularity, tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 3 || tokens[0] != PAD || tokens[1] != UNK || tokens[2] != EOS {
            return Err(Error::invalid("vocabulary must start with <pad>, <unk>, <eos>"));
        }
        if granularity == Granularity::Character && tokens.get(3).map(String::as_str) != Some(" ")
        {
            return Err(Error::invalid("character vocabulary must hold the space at id 3"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self {
            granularity,
            tokens,
            index,
        })
    }

    /// Builds a deterministic vocabulary: specials first, then units by
    /// descending frequency with ties broken lexicographically.
    ///
    /// Character vocabularies keep printable characters only and are capped at
    /// [`CHAR_VOCAB_CAP`] ids unless `max_size` says otherwise.
    pub fn build(corpus: &str, granularity: Granularity, max_size: Option<usize>) -> Result<Self> {
        if corpus.trim().is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut tokens: Vec<String> = vec![PAD.into(), UNK.into(), EOS.into()];
        let cap = match granularity {
            Granularity::Word => {
                for w in corpus.split_whitespace() {
                    *counts.entry(w.to_string()).or_default() += 1;
                }
                max_size
            }
            Granularity::Character => {
                tokens.push(" ".into());
                for c in corpus.chars().filter(|&c| c != ' ' && is_printable(c)) {
                    *counts.entry(c.to_string()).or_default() += 1;
                }
                Some(max_size.unwrap_or(CHAR_VOCAB_CAP))
            }
        };
        for special in [PAD, UNK, EOS] {
            counts.remove(special);
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let room = cap.map_or(usize::MAX, |c| c.saturating_sub(tokens.len()));
        tokens.extend(ranked.into_iter().take(room).map(|(t, _)| t));
        Self::from_tokens(granularity, tokens)
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn pad_id(&self) -> u32 {
        0
    }

    pub fn unk_id(&self) -> u32 {
        1
    }

    pub fn eos_id(&self) -> u32 {
        2
    }

    /// Id of the space token (character vocabularies only).
    pub fn space_id(&self) -> Option<u32> {
        match self.granularity {
            Granularity::Character => Some(3),
            Granularity::Word => None,
        }
    }

    pub fn is_special(&self, id: u32) -> bool {
        id < 3
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Words split on whitespace runs; characters map one to one with the
    /// space kept as a token. Unknown units map to `<unk>`.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        match self.granularity {
            Granularity::Word => text
                .split_whitespace()
                .map(|w| self.id(w).unwrap_or(self.unk_id()))
                .collect(),
            Granularity::Character => {
                let mut buf = [0u8; 4];
                text.chars()
                    .map(|c| self.id(c.encode_utf8(&mut buf)).unwrap_or(self.unk_id()))
                    .collect()
            }
        }
    }

    /// Tokenizes a training stream: each non-blank line with whitespace runs
    /// collapsed, followed by `<eos>`.
    pub fn encode_corpus(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for line in text.lines() {
            let normalized = normalize_whitespace(line);
            if normalized.is_empty() {
                continue;
            }
            out.extend(self.tokenize(&normalized));
            out.push(self.eos_id());
        }
        out
    }

    pub fn detokenize(&self, ids: &[u32]) -> String {
        let eos = self.eos_id();
        match self.granularity {
            Granularity::Word => {
                let mut out = String::new();
                for &id in ids {
                    if id == eos {
                        out.push('\n');
                        continue;
                    }
                    if !out.is_empty() && !out.ends_with('\n') {
                        out.push(' ');
                    }
                    out.push_str(self.token(id).unwrap_or(UNK));
                }
                out
            }
            Granularity::Character => ids
                .iter()
                .map(|&id| {
                    if id == eos {
                        "\n"
                    } else {
                        self.token(id).unwrap_or(UNK)
                    }
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound {
                what: "vocabulary",
                path: path.to_path_buf(),
            },
            _ => e.into(),
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
