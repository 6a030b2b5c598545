use serde::{Deserialize, Serialize};

use crate::corpus::Granularity;
use crate::error::{Error, Result};

/// Which character-model enhancement, if any, the embedding layer applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    WordSegment,
    CharPoolSum,
    CharPoolMean,
    CharPoolMax,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Baseline,
        Method::WordSegment,
        Method::CharPoolSum,
        Method::CharPoolMean,
        Method::CharPoolMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::WordSegment => "word_segment",
            Method::CharPoolSum => "char_pool_sum",
            Method::CharPoolMean => "char_pool_mean",
            Method::CharPoolMax => "char_pool_max",
        }
    }
}

pub const DEFAULT_CUTOFFS: [usize; 3] = [20_000, 40_000, 200_000];
pub const WORD_VOCAB_SIZE: usize = 267_736;
pub const CHAR_VOCAB_SIZE: usize = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_layer: usize,
    pub n_head: usize,
    pub d_head: usize,
    pub d_model: usize,
    pub d_embed: usize,
    pub d_inner: usize,
    pub tgt_len: usize,
    pub mem_len: usize,
    pub eval_mem_len: usize,
    pub vocab_size: usize,
    pub granularity: Granularity,
    pub adaptive: bool,
    pub adaptive_cutoffs: Vec<usize>,
    pub adaptive_div: usize,
    pub tie_weights: bool,
    pub method: Method,
    pub max_words_per_seq: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk_char()
    }
}

/// Model sizes with published hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresetSize {
    M5,
    M10,
    M20,
    M30,
    M40,
    M50,
    M80,
}

impl ModelConfig {
    /// Small character model used for desk-scale training.
    pub fn desk_char() -> Self {
        Self {
            n_layer: 2,
            n_head: 2,
            d_head: 16,
            d_model: 32,
            d_embed: 32,
            d_inner: 64,
            tgt_len: 32,
            mem_len: 32,
            eval_mem_len: 128,
            vocab_size: CHAR_VOCAB_SIZE,
            granularity: Granularity::Character,
            adaptive: false,
            adaptive_cutoffs: Vec::new(),
            adaptive_div: 1,
            tie_weights: true,
            method: Method::Baseline,
            max_words_per_seq: 16,
            dropout: 0.1,
        }
    }

    pub fn desk_word(vocab_size: usize) -> Self {
        Self {
            granularity: Granularity::Word,
            vocab_size,
            tgt_len: 16,
            mem_len: 16,
            eval_mem_len: 16,
            ..Self::desk_char()
        }
    }

    /// Word model hyperparameters by size, verbatim from the published
    /// table (adaptive embeddings with the default cutoffs, div 1).
    pub fn word_preset(size: PresetSize) -> Self {
        let (n_layer, n_head, d_head, d_embed, d_inner) = match size {
            PresetSize::M5 => (3, 4, 24, 18, 60),
            PresetSize::M10 => (4, 4, 24, 36, 150),
            PresetSize::M20 => (6, 8, 32, 74, 200),
            PresetSize::M30 => (12, 8, 32, 100, 768),
            PresetSize::M40 => (14, 8, 32, 128, 900),
            PresetSize::M50 => (16, 8, 32, 160, 800),
            PresetSize::M80 => (16, 32, 32, 256, 768),
        };
        Self {
            n_layer,
            n_head,
            d_head,
            d_model: d_embed,
            d_embed,
            d_inner,
            tgt_len: 192,
            mem_len: 192,
            eval_mem_len: 192,
            vocab_size: WORD_VOCAB_SIZE,
            granularity: Granularity::Word,
            adaptive: true,
            adaptive_cutoffs: DEFAULT_CUTOFFS.to_vec(),
            adaptive_div: 1,
            tie_weights: true,
            method: Method::Baseline,
            max_words_per_seq: 1,
            dropout: 0.1,
        }
    }

    /// Character model hyperparameters by size; only 5M, 10M, 20M and 80M
    /// exist for characters.
    pub fn char_preset(size: PresetSize) -> Result<Self> {
        let (n_layer, n_head, d_head, d_embed, d_inner) = match size {
            PresetSize::M5 => (12, 8, 32, 278, 128),
            PresetSize::M10 => (12, 8, 32, 512, 165),
            PresetSize::M20 => (12, 8, 64, 550, 250),
            PresetSize::M80 => (16, 8, 64, 750, 2048),
            other => {
                return Err(Error::Config(format!("no character preset for {other:?}")));
            }
        };
        Ok(Self {
            n_layer,
            n_head,
            d_head,
            d_model: d_embed,
            d_embed,
            d_inner,
            tgt_len: 512,
            mem_len: 512,
            eval_mem_len: 2048,
            vocab_size: CHAR_VOCAB_SIZE,
            granularity: Granularity::Character,
            adaptive: false,
            adaptive_cutoffs: Vec::new(),
            adaptive_div: 1,
            tie_weights: true,
            method: Method::Baseline,
            max_words_per_seq: 512,
            dropout: 0.1,
        })
    }

    pub fn attn_width(&self) -> usize {
        self.n_head * self.d_head
    }

    /// Cluster boundaries `[0, c1, ..., vocab]` for adaptive embeddings,
    /// `[0, vocab]` otherwise.
    pub fn cluster_bounds(&self) -> Vec<usize> {
        let mut b = vec![0];
        if self.adaptive {
            b.extend(&self.adaptive_cutoffs);
        }
        b.push(self.vocab_size);
        b
    }

    /// Embedding width of cluster `i`: `d_embed / div^i`.
    pub fn cluster_dim(&self, i: usize) -> usize {
        self.d_embed / self.adaptive_div.pow(i as u32)
    }

    /// Whether a single shared table serves all clusters.
    pub fn single_table(&self) -> bool {
        !self.adaptive || self.adaptive_div == 1
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_layer", self.n_layer),
            ("n_head", self.n_head),
            ("d_head", self.d_head),
            ("d_model", self.d_model),
            ("d_embed", self.d_embed),
            ("d_inner", self.d_inner),
            ("tgt_len", self.tgt_len),
            ("vocab_size", self.vocab_size),
            ("adaptive_div", self.adaptive_div),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.adaptive {
            let mut prev = 0;
            for &c in &self.adaptive_cutoffs {
                if c <= prev {
                    return Err(Error::Config(
                        "adaptive_cutoffs must be positive and strictly increasing".into(),
                    ));
                }
                prev = c;
            }
            if prev >= self.vocab_size {
                return Err(Error::Config(format!(
                    "adaptive_cutoffs must be below vocab_size {}",
                    self.vocab_size
                )));
            }
            if self.cluster_dim(self.adaptive_cutoffs.len()) == 0 {
                return Err(Error::Config(format!(
                    "d_embed {} too small for div {} over {} clusters",
                    self.d_embed,
                    self.adaptive_div,
                    self.adaptive_cutoffs.len() + 1
                )));
            }
        }
        if self.method != Method::Baseline && self.granularity != Granularity::Character {
            return Err(Error::Config(format!(
                "method {} requires character granularity",
                self.method.name()
            )));
        }
        if self.method == Method::WordSegment && self.max_words_per_seq == 0 {
            return Err(Error::Config("max_words_per_seq must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for size in [
            PresetSize::M5,
            PresetSize::M10,
            PresetSize::M20,
            PresetSize::M30,
            PresetSize::M40,
            PresetSize::M50,
            PresetSize::M80,
        ] {
            ModelConfig::word_preset(size).validate().unwrap();
        }
        assert!(ModelConfig::char_preset(PresetSize::M30).is_err());
        ModelConfig::char_preset(PresetSize::M80).unwrap().validate().unwrap();
    }

    #[test]
    fn rejects_unordered_cutoffs() {
        let mut c = ModelConfig::word_preset(PresetSize::M10);
        c.adaptive_cutoffs = vec![40_000, 20_000];
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("strictly increasing"), "{msg}");
    }

    #[test]
    fn rejects_method_on_word_model() {
        let mut c = ModelConfig::desk_word(100);
        c.method = Method::CharPoolMax;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_json_keys_rejected() {
        let err = serde_json::from_str::<ModelConfig>(r#"{"n_layers": 3}"#);
        assert!(err.is_err());
    }
}
