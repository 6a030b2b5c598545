use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::{Method, ModelConfig};

/// Parameter component used by the breakdown analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    AdaEmb,
    Attn,
    #[serde(rename = "FFN")]
    Ffn,
    Softmax,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::AdaEmb,
        Component::Attn,
        Component::Ffn,
        Component::Softmax,
    ];
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Component::AdaEmb => "AdaEmb",
            Component::Attn => "Attn",
            Component::Ffn => "FFN",
            Component::Softmax => "Softmax",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Normal,
    Zeros,
    Ones,
}

/// One tensor the model allocates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub component: Component,
    pub init: Init,
}

impl ParamSpec {
    fn new(name: impl Into<String>, shape: &[usize], component: Component, init: Init) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            component,
            init,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

pub fn layer_prefix(layer: usize) -> String {
    format!("layers.{layer:03}")
}

/// Every tensor `build_model` allocates, in a fixed order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    use Component::*;
    use Init::*;
    let (v, de, dm, di, hd) = (
        cfg.vocab_size,
        cfg.d_embed,
        cfg.d_model,
        cfg.d_inner,
        cfg.attn_width(),
    );
    let bounds = cfg.cluster_bounds();
    let n_clusters = bounds.len() - 1;
    let mut specs = Vec::new();

    if cfg.single_table() {
        specs.push(ParamSpec::new("emb.table", &[v, de], AdaEmb, Normal));
        if de != dm {
            specs.push(ParamSpec::new("emb.proj", &[de, dm], AdaEmb, Normal));
        }
    } else {
        for i in 0..n_clusters {
            let rows = bounds[i + 1] - bounds[i];
            let e = cfg.cluster_dim(i);
            specs.push(ParamSpec::new(format!("emb.cluster{i}.table"), &[rows, e], AdaEmb, Normal));
            specs.push(ParamSpec::new(format!("emb.cluster{i}.proj"), &[e, dm], AdaEmb, Normal));
        }
    }
    if cfg.method == Method::WordSegment {
        specs.push(ParamSpec::new(
            "emb.segment",
            &[cfg.max_words_per_seq, de],
            AdaEmb,
            Normal,
        ));
    }

    for l in 0..cfg.n_layer {
        let p = layer_prefix(l);
        specs.extend([
            ParamSpec::new(format!("{p}.attn.qkv"), &[dm, 3 * hd], Attn, Normal),
            ParamSpec::new(format!("{p}.attn.out"), &[hd, dm], Attn, Normal),
            ParamSpec::new(format!("{p}.attn.r_net"), &[dm, hd], Attn, Normal),
            ParamSpec::new(format!("{p}.attn.r_w_bias"), &[hd], Attn, Zeros),
            ParamSpec::new(format!("{p}.attn.r_r_bias"), &[hd], Attn, Zeros),
            ParamSpec::new(format!("{p}.attn.ln.gain"), &[dm], Attn, Ones),
            ParamSpec::new(format!("{p}.attn.ln.bias"), &[dm], Attn, Zeros),
            ParamSpec::new(format!("{p}.ffn.w1"), &[dm, di], Ffn, Normal),
            ParamSpec::new(format!("{p}.ffn.b1"), &[di], Ffn, Zeros),
            ParamSpec::new(format!("{p}.ffn.w2"), &[di, dm], Ffn, Normal),
            ParamSpec::new(format!("{p}.ffn.b2"), &[dm], Ffn, Zeros),
            ParamSpec::new(format!("{p}.ffn.ln.gain"), &[dm], Ffn, Ones),
            ParamSpec::new(format!("{p}.ffn.ln.bias"), &[dm], Ffn, Zeros),
        ]);
    }

    specs.push(ParamSpec::new("out.bias", &[v], Softmax, Zeros));
    // The head cluster's output projection is never shared with the input side.
    if cfg.single_table() {
        if de != dm {
            specs.push(ParamSpec::new("out.proj", &[dm, de], Softmax, Normal));
        }
    } else {
        specs.push(ParamSpec::new("out.proj", &[dm, cfg.cluster_dim(0)], Softmax, Normal));
    }
    if !cfg.tie_weights {
        if cfg.single_table() {
            specs.push(ParamSpec::new("out.table", &[v, de], Softmax, Normal));
        } else {
            for i in 0..n_clusters {
                let rows = bounds[i + 1] - bounds[i];
                specs.push(ParamSpec::new(
                    format!("out.cluster{i}.table"),
                    &[rows, cfg.cluster_dim(i)],
                    Softmax,
                    Normal,
                ));
            }
        }
    }
    if cfg.adaptive {
        let tails = cfg.adaptive_cutoffs.len();
        specs.push(ParamSpec::new("out.cluster_weight", &[tails, de], Softmax, Normal));
        specs.push(ParamSpec::new("out.cluster_bias", &[tails], Softmax, Zeros));
    }
    specs
}

/// Parameter counts per component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentBreakdown {
    pub ada_emb: u64,
    pub attn: u64,
    pub ffn: u64,
    pub softmax: u64,
}

impl ComponentBreakdown {
    pub fn total(&self) -> u64 {
        self.ada_emb + self.attn + self.ffn + self.softmax
    }

    pub fn get(&self, c: Component) -> u64 {
        match c {
            Component::AdaEmb => self.ada_emb,
            Component::Attn => self.attn,
            Component::Ffn => self.ffn,
            Component::Softmax => self.softmax,
        }
    }

    pub fn add(&mut self, c: Component, n: u64) {
        match c {
            Component::AdaEmb => self.ada_emb += n,
            Component::Attn => self.attn += n,
            Component::Ffn => self.ffn += n,
            Component::Softmax => self.softmax += n,
        }
    }

    /// Percentage share of each component, in [`Component::ALL`] order.
    pub fn shares(&self) -> [f64; 4] {
        let total = self.total() as f64;
        Component::ALL.map(|c| 100.0 * self.get(c) as f64 / total)
    }
}

/// Closed-form parameter counts for a configuration.
pub fn count_params(cfg: &ModelConfig) -> ComponentBreakdown {
    let v = cfg.vocab_size as u64;
    let de = cfg.d_embed as u64;
    let dm = cfg.d_model as u64;
    let di = cfg.d_inner as u64;
    let hd = cfg.attn_width() as u64;
    let layers = cfg.n_layer as u64;
    let proj_needed = u64::from(de != dm);

    // Σ rows_i × dim_i over adaptive clusters, and Σ dim_i
    let (cluster_scalars, cluster_dims) = if cfg.single_table() {
        (v * de, de)
    } else {
        let bounds = cfg.cluster_bounds();
        bounds.windows(2).enumerate().fold((0, 0), |(s, d), (i, w)| {
            let e = cfg.cluster_dim(i) as u64;
            (s + (w[1] - w[0]) as u64 * e, d + e)
        })
    };

    let mut ada_emb = cluster_scalars;
    ada_emb += if cfg.single_table() {
        proj_needed * de * dm
    } else {
        cluster_dims * dm
    };
    if cfg.method == Method::WordSegment {
        ada_emb += cfg.max_words_per_seq as u64 * de;
    }

    // qkv + output + relative position projection, two relative biases, one LN
    let attn = layers * (5 * dm * hd + 2 * hd + 2 * dm);
    // two linear maps with biases, one LN
    let ffn = layers * (2 * dm * di + di + dm + 2 * dm);

    let mut softmax = v;
    softmax += if cfg.single_table() {
        proj_needed * dm * de
    } else {
        dm * cfg.cluster_dim(0) as u64
    };
    if !cfg.tie_weights {
        softmax += cluster_scalars;
    }
    if cfg.adaptive {
        let tails = cfg.adaptive_cutoffs.len() as u64;
        softmax += tails * de + tails;
    }

    ComponentBreakdown {
        ada_emb,
        attn,
        ffn,
        softmax,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::PresetSize;

    fn enumerate(cfg: &ModelConfig) -> ComponentBreakdown {
        let mut b = ComponentBreakdown::default();
        for s in param_specs(cfg) {
            b.add(s.component, s.numel() as u64);
        }
        b
    }

    #[test]
    fn tied_char_embedding_count() {
        let cfg = ModelConfig {
            d_model: 8,
            d_embed: 8,
            ..ModelConfig::desk_char()
        };
        assert_eq!(count_params(&cfg).ada_emb, 1024);
        // with tied, non-adaptive output only the bias is Softmax
        assert_eq!(count_params(&cfg).softmax, 128);
    }

    #[test]
    fn word_ten_million_preset() {
        let b = count_params(&ModelConfig::word_preset(PresetSize::M10));
        let total = b.total() as f64;
        assert!((total - 10e6).abs() / 10e6 < 0.05, "total {total}");
    }

    #[test]
    fn char_presets_near_nominal() {
        for (size, nominal) in [
            (PresetSize::M5, 5e6),
            (PresetSize::M10, 10e6),
            (PresetSize::M20, 20e6),
            (PresetSize::M80, 80e6),
        ] {
            let total = count_params(&ModelConfig::char_preset(size).unwrap()).total() as f64;
            assert!((total - nominal).abs() / nominal < 0.15, "{size:?}: {total}");
        }
    }

    #[test]
    fn closed_form_matches_enumeration_for_variants() {
        let base = ModelConfig::word_preset(PresetSize::M5);
        let variants = [
            base.clone(),
            ModelConfig {
                tie_weights: false,
                ..base.clone()
            },
            ModelConfig {
                adaptive_div: 2,
                ..base.clone()
            },
            ModelConfig {
                adaptive_div: 2,
                tie_weights: false,
                d_model: 24,
                ..base.clone()
            },
            ModelConfig {
                adaptive: false,
                d_model: 20,
                ..base
            },
            ModelConfig {
                method: Method::WordSegment,
                d_embed: 24,
                ..ModelConfig::desk_char()
            },
        ];
        for cfg in variants {
            cfg.validate().unwrap();
            assert_eq!(count_params(&cfg), enumerate(&cfg), "{cfg:?}");
        }
    }

    #[test]
    fn segment_overhead() {
        let cfg = ModelConfig {
            method: Method::WordSegment,
            max_words_per_seq: 512,
            ..ModelConfig::char_preset(PresetSize::M80).unwrap()
        };
        let base = ModelConfig::char_preset(PresetSize::M80).unwrap();
        assert_eq!(count_params(&cfg).total() - count_params(&base).total(), 384_000);
    }
}
