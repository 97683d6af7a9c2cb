//! Bootstrap confidence intervals and paired t-tests on scored data.
//!
//! The bootstrap resamples records with replacement and recomputes a metric
//! per resample; the 2.5th and 97.5th percentiles of those replicates bracket
//! the point estimate. Resamples on which the metric is undefined (a class
//! missing entirely) are redrawn from a fresh stream and counted.
//!
//! Run with: `cargo run --example bootstrap_and_tests`

use std::collections::BTreeMap;

use fairscl::{auc, bootstrap, paired_t_test, Result, ScoredSet};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    // A noisy but informative scorer over 200 records.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let labels: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
    let scores: Vec<f64> = labels
        .iter()
        .map(|&y| 0.35 + 0.3 * f64::from(y) + 0.35 * rng.random::<f64>())
        .collect();
    let scored = ScoredSet::new(scores, labels, BTreeMap::new())?;

    let result = bootstrap(auc, &scored, 500, 7)?;
    println!(
        "AUC {:.4}, 95% CI ({:.4}, {:.4}), B = {}, redraws = {}",
        result.point, result.ci_low, result.ci_high, result.b, result.redraws
    );

    // Paired t-test: the same replicate indices evaluated under two models
    // give paired samples; the test asks whether the mean difference is 0.
    let under_a: Vec<f64> = result.replicates.clone();
    let under_b: Vec<f64> = result
        .replicates
        .iter()
        .map(|v| v - 0.01 + 0.02 * (rng.random::<f64>() - 0.5))
        .collect();
    let t = paired_t_test(&under_a, &under_b)?;
    println!(
        "paired t-test: t = {:.3}, df = {}, p = {:.2e}, mean diff = {:+.4}",
        t.t, t.df, t.p, t.mean_diff
    );

    // Zero-variance differences never produce NaN: identical samples give
    // p = 1, exactly constant nonzero differences give p = 0 with the
    // degenerate flag set.
    let same = paired_t_test(&under_a, &under_a)?;
    let offset = paired_t_test(&[1.0, 2.0, 3.0, 4.0], &[0.5, 1.5, 2.5, 3.5])?;
    println!("identical samples: p = {}", same.p);
    println!(
        "constant offset: p = {}, degenerate = {}",
        offset.p, offset.degenerate
    );
    Ok(())
}
