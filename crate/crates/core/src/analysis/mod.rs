//! Quantitative analyses: component breakdown over sampled architectures,
//! peak-memory estimation, accuracy-memory pareto data and ExactMatch
//! curves.

mod breakdown;
mod curves;
mod memory;

pub use breakdown::{
    architecture_config, breakdown_study, sample_architectures, ArchitectureSpace, BreakdownStudy,
    ComponentShares, BREAKDOWN_SEED,
};
pub use curves::{
    cutoff_curve, em_vs_n_curve, pareto_table, write_csv, CurvePoint, CutoffOrder, CutoffPoint,
    ParetoEntry, ParetoRow,
};
pub use memory::{
    estimate_peak_memory, measure_forward_bytes, MemoryAssumptions, MemoryEstimate, MemoryMode,
    ACT_HEADS, ACT_INNER, ACT_KEY_HEADS, ACT_KEY_MODEL, ACT_LOGITS, ACT_MODEL, ACT_SCORES,
};
