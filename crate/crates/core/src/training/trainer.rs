use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::batch::batch_iterator;
use super::optim::{clip_grad_norm, learning_rate, Adam};
use crate::error::{Error, Result};
use crate::model::{DecoderModel, Memory, ModelConfig};
use crate::tensor::{Rng, Tensor, PROB_EPS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub max_steps: usize,
    pub batch_size: usize,
    pub tgt_len: usize,
    pub mem_len: usize,
    pub seed: u64,
    /// Steps between validation passes; 0 disables them.
    pub eval_interval: usize,
    pub clip_norm: f64,
    /// Carry segment memory between consecutive segments of a lane.
    pub use_memory: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Small budget for desk-scale runs.
    pub fn desk() -> Self {
        Self {
            learning_rate: 0.003,
            warmup_steps: 20,
            max_steps: 200,
            batch_size: 8,
            tgt_len: 32,
            mem_len: 32,
            seed: 0,
            eval_interval: 0,
            clip_norm: 0.25,
            use_memory: true,
        }
    }

    /// Published character-model schedule.
    pub fn char_defaults() -> Self {
        Self {
            learning_rate: 0.001,
            warmup_steps: 4_000,
            max_steps: 400_000,
            batch_size: 128,
            tgt_len: 512,
            mem_len: 512,
            eval_interval: 4_000,
            ..Self::desk()
        }
    }

    /// Published word-model schedule.
    pub fn word_defaults() -> Self {
        Self {
            learning_rate: 0.01,
            warmup_steps: 1_000,
            max_steps: 200_000,
            batch_size: 256,
            tgt_len: 192,
            mem_len: 192,
            eval_interval: 4_000,
            ..Self::desk()
        }
    }

    /// Desk budget with segment lengths taken from `model`.
    pub fn desk_for(model: &ModelConfig) -> Self {
        Self {
            tgt_len: model.tgt_len,
            mem_len: model.mem_len,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("warmup_steps", self.warmup_steps),
            ("max_steps", self.max_steps),
            ("batch_size", self.batch_size),
            ("tgt_len", self.tgt_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Config("learning_rate and clip_norm must be positive".into()));
        }
        if self.warmup_steps > self.max_steps {
            return Err(Error::Config(format!(
                "warmup_steps {} exceeds max_steps {}",
                self.warmup_steps, self.max_steps
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|_| Error::NotFound {
            what: "config",
            path: path.to_path_buf(),
        })?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub nll: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub trace: Vec<LossRecord>,
    pub evals: Vec<EvalPoint>,
}

impl TrainReport {
    /// Mean loss of the first and last `n` steps.
    pub fn loss_trend(&self, n: usize) -> Option<(f64, f64)> {
        let k = n.min(self.trace.len());
        if k == 0 {
            return None;
        }
        let mean = |r: &[LossRecord]| r.iter().map(|x| x.loss).sum::<f64>() / r.len() as f64;
        Some((mean(&self.trace[..k]), mean(&self.trace[self.trace.len() - k..])))
    }
}

pub fn write_loss_trace(path: &Path, trace: &[LossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in trace {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Trains `model` in place on a token stream.
///
/// Each step processes one segment per lane; lanes run in parallel on
/// separate graphs and their gradients are averaged in lane order, so the
/// result does not depend on the thread count. Memory is reset whenever
/// the iterator wraps around to the start of the stream.
pub fn train(
    model: &mut DecoderModel,
    tokens: &[u32],
    cfg: &TrainConfig,
    valid: Option<&[u32]>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let mc = model.config();
    if cfg.tgt_len != mc.tgt_len || cfg.mem_len != mc.mem_len {
        return Err(Error::Config(format!(
            "train segment lengths ({}, {}) differ from the model's ({}, {})",
            cfg.tgt_len, cfg.mem_len, mc.tgt_len, mc.mem_len
        )));
    }
    let mut batches = batch_iterator(tokens, cfg.batch_size, cfg.tgt_len)?;
    let rng = Rng::new(cfg.seed);
    let mut memories: Vec<Memory<f32>> = vec![Memory::default(); cfg.batch_size];
    let mut adam = Adam::default();
    let mut report = TrainReport::default();

    for step in 1..=cfg.max_steps {
        let batch = match batches.next() {
            Some(b) => b,
            None => {
                batches.reset();
                memories.iter_mut().for_each(Memory::clear);
                batches.next().expect("iterator holds at least one segment")
            }
        };
        let frozen = &*model;
        let lanes: Vec<(f64, BTreeMap<String, Tensor>, Memory<f32>)> = batch
            .inputs
            .par_iter()
            .zip(&batch.targets)
            .zip(memories.par_iter())
            .enumerate()
            .map(|(lane, ((inp, tgt), mem))| {
                let mut mem = if cfg.use_memory { mem.clone() } else { Memory::default() };
                let mut drop_rng = rng.fork((step * cfg.batch_size + lane) as u64);
                let (loss, grads) =
                    frozen.loss_and_grads(inp, tgt, &mut mem, cfg.use_memory, Some(&mut drop_rng))?;
                Ok((loss, grads, mem))
            })
            .collect::<Result<_>>()?;

        let scale = 1.0 / cfg.batch_size as f32;
        let mut loss = 0.0;
        let mut grads: BTreeMap<String, Tensor> = BTreeMap::new();
        for (lane, (l, g, mem)) in lanes.into_iter().enumerate() {
            loss += l;
            for (name, t) in g {
                match grads.get_mut(&name) {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(t.data())
                        .for_each(|(a, &b)| *a += b * scale),
                    None => {
                        let mut t = t;
                        t.data_mut().iter_mut().for_each(|x| *x *= scale);
                        grads.insert(name, t);
                    }
                }
            }
            memories[lane] = mem;
        }
        loss /= cfg.batch_size as f64;
        let lr = learning_rate(step, cfg.learning_rate, cfg.warmup_steps, cfg.max_steps);
        let norm = clip_grad_norm(&mut grads, cfg.clip_norm);
        if !loss.is_finite() || !norm.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                lr,
                grad_norm: norm,
            });
        }
        adam.step(model, &grads, lr)?;
        report.trace.push(LossRecord {
            step,
            loss,
            lr,
            grad_norm: norm,
        });
        if let Some(v) = valid {
            if cfg.eval_interval > 0 && (step % cfg.eval_interval == 0 || step == cfg.max_steps) {
                report.evals.push(EvalPoint {
                    step,
                    nll: evaluate_nll(model, v, model.config().eval_mem_len)?.0,
                });
            }
        }
    }
    Ok(report)
}

/// Mean next-token NLL (nats) of a token stream and the number of
/// predictions, reading it in `tgt_len` segments with `mem_len` memory.
pub fn evaluate_nll(model: &DecoderModel, tokens: &[u32], mem_len: usize) -> Result<(f64, usize)> {
    if tokens.len() < 2 {
        return Err(Error::CorpusTooSmall {
            needed: 2,
            got: tokens.len(),
        });
    }
    let seg = model.config().tgt_len;
    let mut memory = Memory::default();
    let mut total = 0.0;
    let n = tokens.len() - 1;
    for start in (0..n).step_by(seg) {
        let end = (start + seg).min(n);
        let probs = model.forward_with(&mut memory, &tokens[start..end], mem_len)?;
        for (r, &t) in tokens[start + 1..=end].iter().enumerate() {
            total -= f64::from(probs.row(r)[t as usize]).max(PROB_EPS).ln();
        }
    }
    Ok((total / n as f64, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthetic_corpus, Granularity, Vocabulary};
    use crate::model::build_model;

    fn setup() -> (DecoderModel, Vec<u32>, TrainConfig) {
        let text = synthetic_corpus(1, 20_000);
        let vocab = Vocabulary::build(&text, Granularity::Character, None).unwrap();
        let tokens = vocab.encode_corpus(&text);
        let mc = ModelConfig {
            tgt_len: 16,
            mem_len: 16,
            vocab_size: vocab.len(),
            ..ModelConfig::desk_char()
        };
        let model = build_model(&mc, &mut Rng::new(5)).unwrap();
        let cfg = TrainConfig {
            max_steps: 6,
            warmup_steps: 2,
            batch_size: 4,
            ..TrainConfig::desk_for(&mc)
        };
        (model, tokens, cfg)
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let (m, tokens, cfg) = setup();
        let a = train(&mut m.clone(), &tokens, &cfg, None).unwrap();
        let b = train(&mut m.clone(), &tokens, &cfg, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn memory_changes_the_loss() {
        let (m, tokens, cfg) = setup();
        let with = train(&mut m.clone(), &tokens, &cfg, None).unwrap();
        let cfg_no = TrainConfig {
            use_memory: false,
            ..cfg
        };
        let without = train(&mut m.clone(), &tokens, &cfg_no, None).unwrap();
        // the first step has no memory either way
        assert_eq!(with.trace[0].loss, without.trace[0].loss);
        assert_ne!(with.trace[1].loss, without.trace[1].loss);
    }

    #[test]
    fn mismatched_segment_length_rejected() {
        let (mut m, tokens, cfg) = setup();
        let cfg = TrainConfig { tgt_len: 8, ..cfg };
        assert!(matches!(train(&mut m, &tokens, &cfg, None), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lr": 0.1}"#).is_err());
    }
}
