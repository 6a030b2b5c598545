use std::collections::{BTreeMap, HashMap};

use super::config::{Method, ModelConfig};
use super::params::{layer_prefix, param_specs, Component, ComponentBreakdown, Init};
use crate::corpus::CHAR_SPACE_ID;
use crate::error::{Error, Result};
use crate::methods::WordCursor;
use crate::tensor::{Graph, PoolKind, Rng, Scalar, Tensor, Var};

const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub tensor: Tensor<T>,
    pub component: Component,
}

/// Cached per-layer hidden states plus the word-boundary cursor the
/// character methods carry across segments. Values are plain tensors, so
/// nothing cached here is ever part of a gradient path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Memory<T> {
    layers: Vec<Tensor<T>>,
    cursor: WordCursor,
}

impl<T: Scalar> Memory<T> {
    pub fn len(&self) -> usize {
        self.layers.first().map_or(0, |t| t.rows())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn layers(&self) -> &[Tensor<T>] {
        &self.layers
    }

    pub fn cursor(&self) -> &WordCursor {
        &self.cursor
    }

    pub fn clear(&mut self) {
        self.layers.clear();
        self.cursor = WordCursor::default();
    }

    pub fn bytes(&self) -> usize {
        self.layers.iter().map(|t| t.numel() * T::BYTES).sum()
    }
}

/// Graph handles for every parameter of a model.
pub struct ParamVars {
    vars: HashMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

pub struct ForwardOutput {
    pub logits: Var,
    /// Input hidden states of each layer for the current segment.
    pub layer_inputs: Vec<Var>,
    /// Cursor state after consuming the segment.
    pub cursor: WordCursor,
}

/// Decoder-only transformer with segment-level recurrence and relative
/// positional attention.
#[derive(Clone, Debug)]
pub struct DecoderModel<T: Scalar = f32> {
    config: ModelConfig,
    params: BTreeMap<String, Param<T>>,
    memory: Memory<T>,
}

/// Allocates and initializes every parameter: weights ~ N(0, 0.02), biases
/// zero, layer-norm gains one. Allocation follows [`param_specs`] order, so a
/// seed fixes the initialization.
pub fn build_model<T: Scalar>(config: &ModelConfig, rng: &mut Rng) -> Result<DecoderModel<T>> {
    config.validate()?;
    let mut params = BTreeMap::new();
    for spec in param_specs(config) {
        let tensor = match spec.init {
            Init::Normal => Tensor::from_fn(&spec.shape, |_| T::of(rng.normal(0.0, INIT_STD))),
            Init::Zeros => Tensor::zeros(&spec.shape),
            Init::Ones => Tensor::full(&spec.shape, T::one()),
        };
        params.insert(
            spec.name,
            Param {
                tensor,
                component: spec.component,
            },
        );
    }
    Ok(DecoderModel {
        config: config.clone(),
        params,
        memory: Memory::default(),
    })
}

fn sinusoid<T: Scalar>(klen: usize, d: usize) -> Tensor<T> {
    // row r encodes relative distance r
    Tensor::from_fn(&[klen, d], |i| {
        let (pos, c) = ((i / d) as f64, i % d);
        let freq = 1.0 / 10_000f64.powf((2 * (c / 2)) as f64 / d as f64);
        let angle = pos * freq;
        T::of(if c % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

impl<T: Scalar> DecoderModel<T> {
    pub fn new(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        build_model(config, rng)
    }

    /// Reassembles a model from named tensors, checking names and shapes
    /// against the configuration.
    pub fn from_tensors(config: &ModelConfig, mut tensors: BTreeMap<String, Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let mut params = BTreeMap::new();
        for spec in param_specs(config) {
            let t = tensors.remove(&spec.name).ok_or_else(|| {
                Error::Checkpoint(format!("missing tensor `{}`", spec.name))
            })?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, config expects {:?}",
                    spec.name,
                    t.shape(),
                    spec.shape
                )));
            }
            params.insert(
                spec.name,
                Param {
                    tensor: t,
                    component: spec.component,
                },
            );
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor `{extra}`")));
        }
        Ok(Self {
            config: config.clone(),
            params,
            memory: Memory::default(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &BTreeMap<String, Param<T>> {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name).map(|p| &p.tensor)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.get_mut(name).map(|p| &mut p.tensor)
    }

    pub fn num_params(&self) -> u64 {
        self.params.values().map(|p| p.tensor.numel() as u64).sum()
    }

    /// Component counts enumerated from the allocated tensors.
    pub fn allocated_breakdown(&self) -> ComponentBreakdown {
        let mut b = ComponentBreakdown::default();
        for p in self.params.values() {
            b.add(p.component, p.tensor.numel() as u64);
        }
        b
    }

    pub fn memory(&self) -> &Memory<T> {
        &self.memory
    }

    pub fn reset_memory(&mut self) {
        self.memory.clear();
    }

    pub fn cast<U: Scalar>(&self) -> DecoderModel<U> {
        DecoderModel {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Param {
                            tensor: p.tensor.cast(),
                            component: p.component,
                        },
                    )
                })
                .collect(),
            memory: Memory::default(),
        }
    }

    /// Puts every parameter on the graph, as trainable leaves or constants.
    pub fn attach(&self, g: &mut Graph<T>, trainable: bool) -> ParamVars {
        let vars = self
            .params
            .iter()
            .map(|(name, p)| {
                let v = if trainable {
                    g.param(p.tensor.clone())
                } else {
                    g.constant(p.tensor.clone())
                };
                (name.clone(), v)
            })
            .collect();
        ParamVars { vars }
    }

    fn embed(
        &self,
        g: &mut Graph<T>,
        p: &ParamVars,
        tokens: &[u32],
        memory: &Memory<T>,
    ) -> Result<(Var, WordCursor)> {
        let cfg = &self.config;
        if !cfg.single_table() {
            return Err(Error::Config(
                "adaptive embeddings with div > 1 are for parameter accounting only".into(),
            ));
        }
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let table = p.get("emb.table")?;
        let mut emb = g.embedding(table, &ids)?;
        let space = CHAR_SPACE_ID;
        let cursor = &memory.cursor;
        let next_cursor = cursor.advance(tokens, space, cfg.tgt_len);

        match cfg.method {
            Method::Baseline => {}
            Method::WordSegment => {
                let idx = cursor.segment_indices(tokens, space, cfg.max_words_per_seq, cfg.tgt_len);
                let seg = g.embedding(p.get("emb.segment")?, &idx)?;
                emb = g.add(emb, seg)?;
            }
            Method::CharPoolSum | Method::CharPoolMean | Method::CharPoolMax => {
                let kind = match cfg.method {
                    Method::CharPoolSum => PoolKind::Sum,
                    Method::CharPoolMean => PoolKind::Mean,
                    _ => PoolKind::Max,
                };
                let (prefix, starts) = cursor.pool_window(tokens, space);
                let source = if prefix.is_empty() {
                    emb
                } else {
                    let pre: Vec<usize> = prefix.iter().map(|&t| t as usize).collect();
                    let pre_emb = g.embedding(table, &pre)?;
                    g.concat_rows(&[pre_emb, emb])?
                };
                let pooled = g.segment_pool(source, &starts, kind)?;
                let pooled = if prefix.is_empty() {
                    pooled
                } else {
                    g.slice_rows(pooled, prefix.len(), tokens.len())?
                };
                emb = g.add(emb, pooled)?;
            }
        }

        if cfg.d_embed != cfg.d_model {
            let proj = p.get("emb.proj")?;
            emb = g.matmul(emb, proj)?;
        }
        Ok((g.scale(emb, (cfg.d_model as f64).sqrt()), next_cursor))
    }

    /// Builds the forward pass for one segment on `g` and returns its logits.
    ///
    /// `memory` supplies the cached states of earlier segments; it is read
    /// as constants. Passing `dropout` enables training-mode dropout.
    pub fn forward_graph(
        &self,
        g: &mut Graph<T>,
        p: &ParamVars,
        tokens: &[u32],
        memory: &Memory<T>,
        use_memory: bool,
        mut dropout: Option<&mut Rng>,
    ) -> Result<ForwardOutput> {
        let cfg = &self.config;
        if tokens.is_empty() {
            return Err(Error::invalid("forward needs at least one token"));
        }
        if tokens.len() > cfg.tgt_len {
            return Err(Error::SequenceTooLong {
                len: tokens.len(),
                max: cfg.tgt_len,
            });
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id: bad as usize,
                vocab_size: cfg.vocab_size,
            });
        }
        let p_drop = if dropout.is_some() { cfg.dropout } else { 0.0 };
        let drop = |g: &mut Graph<T>, x: Var, rng: &mut Option<&mut Rng>| -> Result<Var> {
            match rng {
                Some(r) => g.dropout(x, p_drop, r),
                None => Ok(x),
            }
        };

        let (emb, cursor) = self.embed(g, p, tokens, memory)?;
        let mut h = drop(g, emb, &mut dropout)?;

        let qlen = tokens.len();
        let mlen = if use_memory { memory.len() } else { 0 };
        let klen = qlen + mlen;
        let hd = cfg.attn_width();
        let dh = cfg.d_head;
        let pos = g.constant(sinusoid(klen, cfg.d_model));
        let scale = 1.0 / (dh as f64).sqrt();
        let mut layer_inputs = Vec::with_capacity(cfg.n_layer);

        for l in 0..cfg.n_layer {
            let pre = layer_prefix(l);
            let name = |s: &str| format!("{pre}.{s}");
            layer_inputs.push(h);

            let cat = if mlen > 0 {
                let m = g.constant(memory.layers[l].clone());
                g.concat_rows(&[m, h])?
            } else {
                h
            };
            let w_qkv = p.get(&name("attn.qkv"))?;
            let w_q = g.slice_cols(w_qkv, 0, hd)?;
            let w_kv = g.slice_cols(w_qkv, hd, 2 * hd)?;
            let q = g.matmul(h, w_q)?;
            let kv = g.matmul(cat, w_kv)?;
            let r = {
                let w_r = p.get(&name("attn.r_net"))?;
                g.matmul(pos, w_r)?
            };
            let q_w = g.add_row(q, p.get(&name("attn.r_w_bias"))?)?;
            let q_r = g.add_row(q, p.get(&name("attn.r_r_bias"))?)?;

            let mut heads = Vec::with_capacity(cfg.n_head);
            for head in 0..cfg.n_head {
                let off = head * dh;
                let qw = g.slice_cols(q_w, off, dh)?;
                let qr = g.slice_cols(q_r, off, dh)?;
                let k = g.slice_cols(kv, off, dh)?;
                let v = g.slice_cols(kv, hd + off, dh)?;
                let rh = g.slice_cols(r, off, dh)?;
                let content = g.matmul_nt(qw, k)?;
                let by_distance = g.matmul_nt(qr, rh)?;
                let position = g.rel_gather(by_distance, mlen)?;
                let score = g.add(content, position)?;
                let score = g.scale(score, scale);
                let score = g.causal_mask(score, mlen)?;
                let prob = g.softmax(score);
                let prob = drop(g, prob, &mut dropout)?;
                heads.push(g.matmul(prob, v)?);
            }
            let attn_vec = if heads.len() == 1 {
                heads[0]
            } else {
                g.concat_cols(&heads)?
            };
            let attn_out = g.matmul(attn_vec, p.get(&name("attn.out"))?)?;
            let attn_out = drop(g, attn_out, &mut dropout)?;
            let res = g.add(h, attn_out)?;
            h = g.layer_norm(
                res,
                p.get(&name("attn.ln.gain"))?,
                p.get(&name("attn.ln.bias"))?,
            )?;

            let z = g.matmul(h, p.get(&name("ffn.w1"))?)?;
            let z = g.add_row(z, p.get(&name("ffn.b1"))?)?;
            let z = g.gelu(z);
            let z = drop(g, z, &mut dropout)?;
            let z = g.matmul(z, p.get(&name("ffn.w2"))?)?;
            let z = g.add_row(z, p.get(&name("ffn.b2"))?)?;
            let z = drop(g, z, &mut dropout)?;
            let res = g.add(h, z)?;
            h = g.layer_norm(
                res,
                p.get(&name("ffn.ln.gain"))?,
                p.get(&name("ffn.ln.bias"))?,
            )?;
        }
        let h = drop(g, h, &mut dropout)?;

        let z = if cfg.d_embed != cfg.d_model {
            g.matmul(h, p.get("out.proj")?)?
        } else {
            h
        };
        let table = if cfg.tie_weights {
            p.get("emb.table")?
        } else {
            p.get("out.table")?
        };
        let logits = g.matmul_nt(z, table)?;
        let logits = g.add_row(logits, p.get("out.bias")?)?;
        Ok(ForwardOutput {
            logits,
            layer_inputs,
            cursor,
        })
    }

    /// New memory after a segment: the last `mem_len` rows of
    /// `[old memory ‖ current layer inputs]` per layer, detached.
    pub fn next_memory(
        &self,
        g: &Graph<T>,
        out: &ForwardOutput,
        memory: &Memory<T>,
        use_memory: bool,
        mem_len: usize,
    ) -> Result<Memory<T>> {
        let mut layers = Vec::with_capacity(out.layer_inputs.len());
        if mem_len > 0 {
            for (l, &v) in out.layer_inputs.iter().enumerate() {
                let current = g.value(v);
                let cat = match memory.layers.get(l) {
                    Some(old) if use_memory => Tensor::vstack(&[old, current])?,
                    _ => current.clone(),
                };
                let keep = cat.rows().min(mem_len);
                layers.push(cat.slice_rows(cat.rows() - keep, keep));
            }
        }
        Ok(Memory {
            layers,
            cursor: out.cursor.clone(),
        })
    }

    /// Evaluation-mode forward against an external memory, which is
    /// advanced in place. Returns next-token distributions, one row per
    /// position.
    pub fn forward_with(
        &self,
        memory: &mut Memory<T>,
        tokens: &[u32],
        mem_len: usize,
    ) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.attach(&mut g, false);
        let out = self.forward_graph(&mut g, &p, tokens, memory, true, None)?;
        *memory = self.next_memory(&g, &out, memory, true, mem_len)?;
        let probs = g.softmax(out.logits);
        Ok(g.value(probs).clone())
    }

    /// Evaluation-mode forward using the model's own memory (`mem_len` rows).
    pub fn forward(&mut self, tokens: &[u32], use_memory: bool) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.attach(&mut g, false);
        let out = self.forward_graph(&mut g, &p, tokens, &self.memory, use_memory, None)?;
        if use_memory {
            self.memory = self.next_memory(&g, &out, &self.memory, true, self.config.mem_len)?;
        }
        let probs = g.softmax(out.logits);
        Ok(g.value(probs).clone())
    }

    /// Mean next-token cross-entropy of one segment and the gradient of every
    /// parameter. `memory` is advanced to the post-segment state.
    pub fn loss_and_grads(
        &self,
        inputs: &[u32],
        targets: &[u32],
        memory: &mut Memory<T>,
        use_memory: bool,
        dropout: Option<&mut Rng>,
    ) -> Result<(f64, BTreeMap<String, Tensor<T>>)> {
        let mut g = Graph::new();
        let p = self.attach(&mut g, true);
        let out = self.forward_graph(&mut g, &p, inputs, memory, use_memory, dropout)?;
        let t: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
        let loss = g.cross_entropy(out.logits, &t)?;
        g.backward(loss)?;
        let value = g.value(loss).data()[0].as_f64();
        let mut grads = BTreeMap::new();
        for (name, v) in p.iter() {
            let grad = g
                .grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(g.shape(v)));
            grads.insert(name.to_string(), grad);
        }
        *memory = self.next_memory(&g, &out, memory, use_memory, self.config.mem_len)?;
        Ok((value, grads))
    }

    /// Mean next-token cross-entropy without gradients.
    pub fn loss(&self, inputs: &[u32], targets: &[u32], memory: &Memory<T>, use_memory: bool) -> Result<f64> {
        let mut g = Graph::new();
        let p = self.attach(&mut g, false);
        let out = self.forward_graph(&mut g, &p, inputs, memory, use_memory, None)?;
        let t: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
        let loss = g.cross_entropy(out.logits, &t)?;
        Ok(g.value(loss).data()[0].as_f64())
    }
}

/// Largest relative error between the analytic gradient of the segment
/// loss and central finite differences, over up to `per_tensor` entries of
/// every parameter (all entries when `None`). Memory is held fixed.
pub fn loss_grad_check(
    model: &DecoderModel<f64>,
    inputs: &[u32],
    targets: &[u32],
    memory: &Memory<f64>,
    eps: f64,
    per_tensor: Option<usize>,
) -> Result<f64> {
    let mut mem = memory.clone();
    let (_, grads) = model.loss_and_grads(inputs, targets, &mut mem, true, None)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (name, grad) in &grads {
        let n = grad.numel();
        let step = per_tensor.map_or(1, |k| n.div_ceil(k.max(1)).max(1));
        for i in (0..n).step_by(step) {
            let orig = probe.param(name).expect("known parameter").data()[i];
            probe.param_mut(name).expect("known parameter").data_mut()[i] = orig + eps;
            let plus = probe.loss(inputs, targets, memory, true)?;
            probe.param_mut(name).expect("known parameter").data_mut()[i] = orig - eps;
            let minus = probe.loss(inputs, targets, memory, true)?;
            probe.param_mut(name).expect("known parameter").data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grad.data()[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Granularity;
    use crate::model::count_params;

    fn tiny(method: Method) -> ModelConfig {
        ModelConfig {
            n_layer: 2,
            n_head: 2,
            d_head: 4,
            d_model: 8,
            d_embed: 8,
            d_inner: 16,
            tgt_len: 16,
            mem_len: 16,
            eval_mem_len: 16,
            vocab_size: 12,
            granularity: Granularity::Character,
            method,
            max_words_per_seq: 6,
            ..ModelConfig::desk_char()
        }
    }

    fn model(cfg: &ModelConfig) -> DecoderModel<f64> {
        build_model(cfg, &mut Rng::new(7)).unwrap()
    }

    const TOKENS: [u32; 14] = [4, 5, 3, 6, 7, 8, 3, 9, 3, 10, 11, 4, 3, 5];

    #[test]
    fn rows_are_distributions() {
        let mut m = model(&tiny(Method::Baseline));
        let p = m.forward(&TOKENS, true).unwrap();
        assert_eq!(p.shape(), &[TOKENS.len(), 12]);
        for r in 0..p.rows() {
            let s: f64 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn later_tokens_do_not_change_earlier_outputs() {
        for method in Method::ALL {
            let m = model(&tiny(method));
            let base = m.forward_with(&mut Memory::default(), &TOKENS, 16).unwrap();
            for t in 0..TOKENS.len() {
                let mut changed = TOKENS;
                for v in changed.iter_mut().skip(t + 1) {
                    *v = if *v == 11 { 4 } else { 11 };
                }
                let out = m.forward_with(&mut Memory::default(), &changed, 16).unwrap();
                for r in 0..=t {
                    assert_eq!(out.row(r), base.row(r), "{method:?} t={t} r={r}");
                }
            }
        }
    }

    #[test]
    fn two_segments_match_single_pass() {
        for method in Method::ALL {
            let m = model(&tiny(method));
            let whole = m.forward_with(&mut Memory::default(), &TOKENS, 16).unwrap();
            let mut mem = Memory::default();
            let a = m.forward_with(&mut mem, &TOKENS[..6], 16).unwrap();
            let b = m.forward_with(&mut mem, &TOKENS[6..], 16).unwrap();
            let joined = Tensor::vstack(&[&a, &b]).unwrap();
            assert!(joined.max_abs_diff(&whole) < 1e-10, "{method:?}");
        }
    }

    #[test]
    fn memory_length_grows_to_cap() {
        let mut cfg = tiny(Method::Baseline);
        cfg.tgt_len = 4;
        cfg.mem_len = 10;
        let mut m = model(&cfg);
        for k in 1..=4 {
            m.forward(&TOKENS[..4], true).unwrap();
            assert_eq!(m.memory().len(), (4 * k).min(10));
        }
        m.reset_memory();
        let after_reset = m.forward(&TOKENS[..4], true).unwrap();
        let mut fresh = model(&cfg);
        assert_eq!(after_reset, fresh.forward(&TOKENS[..4], true).unwrap());
    }

    #[test]
    fn too_long_and_out_of_range_rejected() {
        let mut cfg = tiny(Method::Baseline);
        cfg.tgt_len = 4;
        let mut m = model(&cfg);
        assert!(matches!(
            m.forward(&TOKENS[..5], false),
            Err(Error::SequenceTooLong { len: 5, max: 4 })
        ));
        assert!(matches!(
            m.forward(&[40], false),
            Err(Error::TokenOutOfRange { .. })
        ));
    }

    #[test]
    fn allocated_total_matches_closed_form() {
        for method in Method::ALL {
            let cfg = tiny(method);
            let m = model(&cfg);
            assert_eq!(m.allocated_breakdown(), count_params(&cfg));
        }
    }

    #[test]
    fn memory_bearing_gradient_matches_finite_differences() {
        let cfg = ModelConfig {
            d_model: 16,
            d_embed: 16,
            d_head: 8,
            tgt_len: 6,
            mem_len: 6,
            ..tiny(Method::CharPoolMean)
        };
        let m = model(&cfg);
        let mut mem = Memory::default();
        m.forward_with(&mut mem, &TOKENS[..5], 6).unwrap();
        let err = loss_grad_check(&m, &TOKENS[5..10], &TOKENS[6..11], &mem, 1e-5, Some(12)).unwrap();
        assert!(err < 1e-3, "max relative error {err}");
    }

    #[test]
    fn adaptive_forward_is_refused() {
        let cfg = ModelConfig {
            adaptive: true,
            adaptive_cutoffs: vec![6],
            adaptive_div: 2,
            granularity: Granularity::Word,
            ..tiny(Method::Baseline)
        };
        let mut m = model(&cfg);
        assert!(matches!(m.forward(&[4], false), Err(Error::Config(_))));
    }
}
