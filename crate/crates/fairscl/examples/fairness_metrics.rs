//! Subgroup fairness metrics on a hand-made set of scores.
//!
//! Marginal AUC asks, for one category: how well are *its* positives ranked
//! against *every* negative in the set? A model can have a healthy overall
//! AUC while one category's positives sit systematically below the other
//! category's negatives — the per-category table below makes that visible.
//!
//! Run with: `cargo run --example fairness_metrics`

use std::collections::BTreeMap;

use fairscl::{fairness_report, Result, ScoredSet};

fn main() -> Result<()> {
    // Eight records, two categories. Category Y's positives score below
    // category X's negatives, so they lose cross-category comparisons even
    // though Y is internally well ordered.
    let scores = vec![0.92, 0.85, 0.40, 0.35, 0.38, 0.30, 0.25, 0.15];
    let labels = vec![1, 1, 0, 0, 1, 1, 0, 0];
    let categories = ["X", "X", "X", "X", "Y", "Y", "Y", "Y"];

    let mut groups = BTreeMap::new();
    groups.insert(
        "site".to_string(),
        categories.iter().map(|c| c.to_string()).collect(),
    );
    let scored = ScoredSet::new(scores, labels, groups)?;

    let report = fairness_report(&scored, "site", 0.5)?;
    println!("overall AUC: {:.4}", report.overall_auc);
    println!();
    println!("category    n  pos  marginal AUC    TPR    FPR  Brier");
    for (category, m) in &report.per_group {
        println!(
            "{category:>8} {:>4} {:>4}        {:.4} {:>6.2} {:>6.2}  {:.3}",
            m.n, m.n_positive, m.marginal_auc, m.tpr, m.fpr, m.brier
        );
    }
    println!();
    println!(
        "max-min gaps: marginal AUC {:.4}, TPR {:.2}, FPR {:.2}, Brier {:.3}",
        report.deltas.marginal_auc, report.deltas.tpr, report.deltas.fpr, report.deltas.brier
    );
    Ok(())
}
