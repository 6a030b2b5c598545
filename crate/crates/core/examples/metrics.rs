//! ExactMatch@N and PartialMatch@N on a near miss, and how per-N values
//! combine into the overall score.

use autocomplete::metrics::{exact_match_at_n, partial_match_at_n, OverallWeighting};

fn main() {
    let pred = ["the", "west", "or"];
    let truth = ["the", "west", "of"];
    let mut em = Vec::new();
    let mut pm = Vec::new();
    for n in 1..=3 {
        em.push(f64::from(exact_match_at_n(&pred, &truth, n)));
        pm.push(partial_match_at_n(&pred, &truth, n));
        println!("N={n}: EM {}  PM {:.4}", em[n - 1], pm[n - 1]);
    }
    for w in [OverallWeighting::Linear, OverallWeighting::Uniform] {
        println!("{w:?}: EM@overall {:.4}  PM@overall {:.4}", w.combine(&em), w.combine(&pm));
    }
}
