use serde::{Deserialize, Serialize};

use super::{exact_match_at_n, nll_and_perplexity};
use crate::decoding::argmax;
use crate::tensor::Tensor;

/// One single-token case: a one-hot truth, a predicted distribution, and
/// the ExactMatch and NLL the metric implementations assign to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub case: String,
    pub truth: Vec<f64>,
    pub prediction: Vec<f64>,
    pub exact_match: u8,
    pub nll: f64,
}

fn evaluate(case: &str, truth_id: usize, prediction: Vec<f64>) -> TheoryRow {
    let v = prediction.len();
    let names: Vec<String> = (0..v).map(|i| format!("t{i}")).collect();
    let predicted = [names[argmax(&prediction)].as_str()];
    let truth_word = [names[truth_id].as_str()];
    let probs = Tensor::new(&[1, v], prediction.clone()).expect("row vector");
    let (nll, _) = nll_and_perplexity(&probs, &[truth_id]).expect("valid target");
    let mut truth = vec![0.0; v];
    truth[truth_id] = 1.0;
    TheoryRow {
        case: case.to_string(),
        truth,
        prediction,
        exact_match: exact_match_at_n(&predicted, &truth_word, 1),
        nll,
    }
}

/// The two-token sweep (truth = second token, its predicted probability
/// falling from 1 to 0) followed by the one-hot and uniform cases, all
/// scored with [`exact_match_at_n`] and [`nll_and_perplexity`].
pub fn em_ppl_theory_table() -> Vec<TheoryRow> {
    let sweep = [1.0, 0.9, 0.8, 0.7, 0.6, 0.51, 0.5, 0.49, 0.4, 0.3, 0.2, 0.1, 0.0];
    let mut rows: Vec<TheoryRow> = sweep
        .iter()
        .map(|&p| evaluate("sweep", 1, vec![1.0 - p, p]))
        .collect();
    // the 0.49/0.51 pairs exactly, not via 1 - p
    rows[5] = evaluate("sweep", 1, vec![0.49, 0.51]);
    rows[7] = evaluate("sweep", 1, vec![0.51, 0.49]);
    rows.extend([
        evaluate("correct one-hot", 1, vec![0.0, 1.0]),
        evaluate("wrong one-hot", 1, vec![1.0, 0.0]),
        evaluate("uniform, argmax correct", 0, vec![0.5, 0.5]),
        evaluate("uniform, argmax wrong", 1, vec![0.5, 0.5]),
    ]);
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_flips_exact_match_at_the_tie() {
        let t = em_ppl_theory_table();
        assert_eq!(t.len(), 17);
        let em: Vec<u8> = t[..13].iter().map(|r| r.exact_match).collect();
        assert_eq!(em, [1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]);
        assert!((t[12].nll - (1e9f64).ln()).abs() < 1e-9);
    }
}
