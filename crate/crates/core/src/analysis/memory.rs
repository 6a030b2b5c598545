use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{build_model, count_params, Memory, ModelConfig};
use crate::tensor::{Graph, Rng};

/// Activation coefficients, counted in scalars. They were fitted against
/// the graph allocator: every intermediate of the forward pass is kept, so
/// each term counts the tensors of that width that one layer allocates.
///
/// Per query position and layer: `d_model`-wide states.
pub const ACT_MODEL: u64 = 6;
/// Per query position and layer: the feed-forward hidden layer.
pub const ACT_INNER: u64 = 2;
/// Per query position, head and attended key: scores, masks, softmax.
pub const ACT_SCORES: u64 = 7;
/// Per query position and layer: `n_head · d_head`-wide head states.
pub const ACT_HEADS: u64 = 9;
/// Per key position (segment plus memory) and layer: keys, values and
/// relative-position projections, `n_head · d_head` wide.
pub const ACT_KEY_HEADS: u64 = 7;
/// Per key position and layer: the concatenated `d_model`-wide inputs.
pub const ACT_KEY_MODEL: u64 = 3;
/// Per position: output logits and probabilities.
pub const ACT_LOGITS: u64 = 2;
const BYTES_PER_SCALAR: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryMode {
    Inference,
    Training,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryAssumptions {
    pub bytes_per_scalar: u64,
    pub batch: u64,
    pub seq: u64,
    pub mem_len: u64,
    pub mode: MemoryMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEstimate {
    pub parameter_bytes: u64,
    pub activation_bytes: u64,
    pub memory_cache_bytes: u64,
    pub total_peak_bytes: u64,
    pub assumptions: MemoryAssumptions,
}

/// Analytic peak-memory estimate, 4 bytes per scalar.
///
/// * parameters: once in inference; four times in training (weights,
///   gradients and two Adam moments);
/// * memory cache: `n_layer · mem_len · d_model · batch`;
/// * activations, with `k = seq + mem_len` and `hd = n_head · d_head`:
///   `batch · (n_layer · (seq · (6 d_model + 2 d_inner + 7 n_head k + 9 hd) +
///   k · (7 hd + 3 d_model)) + 2 seq · vocab)`, doubled in training for the
///   gradient of every intermediate.
///
/// `mem_len` is the evaluation memory length in inference mode and the
/// training one otherwise.
pub fn estimate_peak_memory(config: &ModelConfig, batch: usize, seq: usize, mode: MemoryMode) -> MemoryEstimate {
    let b = BYTES_PER_SCALAR;
    let mem_len = match mode {
        MemoryMode::Inference => config.eval_mem_len,
        MemoryMode::Training => config.mem_len,
    } as u64;
    let (batch, seq) = (batch as u64, seq as u64);
    let layers = config.n_layer as u64;
    let dm = config.d_model as u64;
    let mut parameter_bytes = b * count_params(config).total();
    if mode == MemoryMode::Training {
        parameter_bytes *= 4;
    }
    let memory_cache_bytes = b * layers * mem_len * dm * batch;
    let heads = config.n_head as u64;
    let hd = heads * config.d_head as u64;
    let keys = seq + mem_len;
    let per_query = ACT_MODEL * dm + ACT_INNER * config.d_inner as u64 + ACT_SCORES * heads * keys + ACT_HEADS * hd;
    let per_key = ACT_KEY_HEADS * hd + ACT_KEY_MODEL * dm;
    let per_row = layers * (seq * per_query + keys * per_key) + ACT_LOGITS * seq * config.vocab_size as u64;
    let mut activation_bytes = b * batch * per_row;
    if mode == MemoryMode::Training {
        activation_bytes *= 2;
    }
    MemoryEstimate {
        parameter_bytes,
        activation_bytes,
        memory_cache_bytes,
        total_peak_bytes: parameter_bytes + activation_bytes + memory_cache_bytes,
        assumptions: MemoryAssumptions {
            bytes_per_scalar: b,
            batch,
            seq,
            mem_len,
            mode,
        },
    }
}

/// Bytes the implementation actually holds during one inference forward of
/// `seq` tokens against a full memory: graph buffers (which include a copy
/// of every parameter) plus the cached states.
pub fn measure_forward_bytes(config: &ModelConfig, seq: usize, seed: u64) -> Result<usize> {
    let model = build_model::<f32>(config, &mut Rng::new(seed))?;
    let tokens: Vec<u32> = (0..config.tgt_len).map(|i| (i % config.vocab_size) as u32).collect();
    let mut memory = Memory::default();
    while memory.len() < config.eval_mem_len {
        let before = memory.len();
        model.forward_with(&mut memory, &tokens, config.eval_mem_len)?;
        if memory.len() == before {
            break;
        }
    }
    let mut g = Graph::new();
    let p = model.attach(&mut g, false);
    model.forward_graph(&mut g, &p, &tokens[..seq.min(config.tgt_len)], &memory, true, None)?;
    Ok(g.bytes_allocated() + memory.bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_batch_doubles_batch_terms() {
        let c = ModelConfig::desk_char();
        let a = estimate_peak_memory(&c, 2, 16, MemoryMode::Inference);
        let b = estimate_peak_memory(&c, 4, 16, MemoryMode::Inference);
        assert_eq!(b.activation_bytes, 2 * a.activation_bytes);
        assert_eq!(b.memory_cache_bytes, 2 * a.memory_cache_bytes);
        assert_eq!(b.parameter_bytes, a.parameter_bytes);
        assert_eq!(
            a.total_peak_bytes,
            a.parameter_bytes + a.activation_bytes + a.memory_cache_bytes
        );
    }

    #[test]
    fn parameters_bound_the_estimate() {
        let c = ModelConfig::desk_char();
        let e = estimate_peak_memory(&c, 1, 1, MemoryMode::Inference);
        assert!(e.total_peak_bytes >= 4 * count_params(&c).total());
        let t = estimate_peak_memory(&c, 1, 1, MemoryMode::Training);
        assert_eq!(t.parameter_bytes, 4 * e.parameter_bytes);
    }
}
