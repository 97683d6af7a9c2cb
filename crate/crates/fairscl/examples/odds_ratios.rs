//! Logistic regression odds ratios with Wald confidence intervals.
//!
//! The fit is plain Newton/IRLS maximum likelihood; each coefficient's
//! odds ratio is `exp(beta)` with a 95% Wald interval. On a single binary
//! predictor the result matches the closed-form 2x2 odds ratio, which makes
//! for an easy sanity check before trusting multi-predictor fits.
//!
//! Run with: `cargo run --example odds_ratios`

use fairscl::{generate_synthetic, logistic_fit, Result, SyntheticConfig};
use ndarray::Array2;

fn main() -> Result<()> {
    // 2x2 table: 40 exposed-positive, 10 exposed-negative, 20 unexposed-
    // positive, 30 unexposed-negative. Closed form: (40*30)/(10*20) = 6.
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (exposed, label, count) in [(1.0, 1, 40), (1.0, 0, 10), (0.0, 1, 20), (0.0, 0, 30)] {
        for _ in 0..count {
            rows.push(exposed);
            y.push(label);
        }
    }
    let x = Array2::from_shape_vec((rows.len(), 1), rows).expect("shape fits");
    let fit = logistic_fit(&x.view(), &y)?;
    println!(
        "2x2 check: OR = {:.4} (95% CI {:.4}-{:.4}), converged in {} iterations",
        fit.odds_ratios[1], fit.or_ci_low[1], fit.or_ci_high[1], fit.iterations
    );

    // The same machinery on the synthetic dataset: does group membership
    // predict the label once the real signal is in the model?
    let data = generate_synthetic(&SyntheticConfig::default(), 11)?;
    let n = data.len();
    let mut design = Vec::with_capacity(n * 3);
    let mut labels = Vec::with_capacity(n);
    for r in data.records() {
        design.push(r.features[0]); // label signal
        design.push(r.features[1]); // group-marking shortcut
        design.push(if r.groups["group"] == "B" { 1.0 } else { 0.0 });
        labels.push(r.label);
    }
    let x = Array2::from_shape_vec((n, 3), design).expect("shape fits");
    let fit = logistic_fit(&x.view(), &labels)?;
    println!();
    println!("synthetic data, three predictors:");
    for (name, k) in [("signal", 1), ("shortcut", 2), ("group B", 3)] {
        println!(
            "  {name:>8}: OR = {:.3} (95% CI {:.3}-{:.3})",
            fit.odds_ratios[k], fit.or_ci_low[k], fit.or_ci_high[k]
        );
    }
    Ok(())
}
