use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoEntry {
    pub label: String,
    pub params: u64,
    pub memory_bytes: u64,
    pub em_overall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub label: String,
    pub params: u64,
    pub memory_bytes: u64,
    pub em_overall: f64,
    pub pareto_optimal: bool,
}

/// Sorts entries by memory and flags those no other entry dominates (no
/// more memory and no lower ExactMatch, strictly better in one of them).
pub fn pareto_table(entries: &[ParetoEntry]) -> Result<Vec<ParetoRow>> {
    if entries.is_empty() {
        return Err(Error::invalid("pareto table needs at least one entry"));
    }
    let dominated = |e: &ParetoEntry| {
        entries.iter().any(|o| {
            o.memory_bytes <= e.memory_bytes
                && o.em_overall >= e.em_overall
                && (o.memory_bytes < e.memory_bytes || o.em_overall > e.em_overall)
        })
    };
    let mut rows: Vec<ParetoRow> = entries
        .iter()
        .map(|e| ParetoRow {
            label: e.label.clone(),
            params: e.params,
            memory_bytes: e.memory_bytes,
            em_overall: e.em_overall,
            pareto_optimal: !dominated(e),
        })
        .collect();
    rows.sort_by(|a, b| {
        a.memory_bytes
            .cmp(&b.memory_bytes)
            .then(b.em_overall.partial_cmp(&a.em_overall).unwrap_or(Ordering::Equal))
    });
    Ok(rows)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub exact_match: f64,
}

/// Mean ExactMatch@N (percent) for N = 1..=max_n. Records without a value
/// at some N count as misses there.
pub fn em_vs_n_curve(records: &[EvalRecord], max_n: usize) -> Result<Vec<CurvePoint>> {
    if records.is_empty() {
        return Err(Error::invalid("no evaluation records"));
    }
    Ok((1..=max_n)
        .map(|n| {
            let hits: f64 = records
                .iter()
                .map(|r| f64::from(r.em_at.get(n - 1).copied().unwrap_or(0)))
                .sum();
            CurvePoint {
                n,
                exact_match: 100.0 * hits / records.len() as f64,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffOrder {
    /// Lowest OOV scores first (prompts closest to the training data).
    Ascending,
    Descending,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffPoint {
    pub k_requested: usize,
    pub k_used: usize,
    pub exact_match_at_1: f64,
}

impl CutoffPoint {
    pub fn clamped(&self) -> bool {
        self.k_used < self.k_requested
    }
}

/// ExactMatch@1 (percent) over the top-k records ranked by OOV score.
/// Ties keep record order; `k` larger than the record count is clamped
/// (see [`CutoffPoint::clamped`]).
pub fn cutoff_curve(records: &[EvalRecord], cutoffs: &[usize], order: CutoffOrder) -> Result<Vec<CutoffPoint>> {
    if records.is_empty() {
        return Err(Error::invalid("no evaluation records"));
    }
    let mut scored = Vec::with_capacity(records.len());
    for r in records {
        let s = r.oov_score.ok_or_else(|| {
            Error::invalid(format!("record {} has no OOV score", r.prompt_id))
        })?;
        scored.push((s, r.em_at.first().copied().unwrap_or(0)));
    }
    scored.sort_by(|a, b| {
        let o = a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal);
        match order {
            CutoffOrder::Ascending => o,
            CutoffOrder::Descending => o.reverse(),
        }
    });
    Ok(cutoffs
        .iter()
        .map(|&k| {
            let used = k.min(scored.len());
            let hits: f64 = scored[..used].iter().map(|&(_, e)| f64::from(e)).sum();
            CutoffPoint {
                k_requested: k,
                k_used: used,
                exact_match_at_1: if used == 0 { 0.0 } else { 100.0 * hits / used as f64 },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(label: &str, mem: u64, em: f64) -> ParetoEntry {
        ParetoEntry {
            label: label.into(),
            params: mem / 4,
            memory_bytes: mem,
            em_overall: em,
        }
    }

    #[test]
    fn dominated_point_flagged() {
        let rows = pareto_table(&[entry("big", 200, 5.0), entry("small", 100, 6.0), entry("mid", 150, 7.0)]).unwrap();
        let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["small", "mid", "big"]);
        let flags: Vec<bool> = rows.iter().map(|r| r.pareto_optimal).collect();
        assert_eq!(flags, [true, true, false]);
        assert!(pareto_table(&[entry("only", 1, 0.0)]).unwrap()[0].pareto_optimal);
    }
}
