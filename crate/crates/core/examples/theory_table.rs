//! ExactMatch and NLL on single-token cases: EM flips at the 0.5 tie while
//! NLL moves smoothly, so the two metrics can disagree.
//!
//!     cargo run --example theory_table

use autocomplete::metrics::em_ppl_theory_table;

fn main() {
    println!("{:<26} {:>12} {:>8}  NLL", "case", "p(truth)", "EM");
    for row in em_ppl_theory_table() {
        let p_truth = row
            .truth
            .iter()
            .zip(&row.prediction)
            .find(|(t, _)| **t == 1.0)
            .map(|(_, p)| *p)
            .unwrap_or(0.0);
        println!("{:<26} {:>12.2} {:>8}  {:.2}", row.case, p_truth, row.exact_match, row.nll);
    }
}
