//! Logistic regression by iteratively reweighted least squares, with Wald
//! standard errors and odds-ratio confidence intervals.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum-likelihood logistic fit. Index 0 of every vector is the
/// intercept; predictor `j` of the input sits at index `j + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `exp(coefficients)`, elementwise.
    pub odds_ratios: Vec<f64>,
    /// 95% Wald interval on the odds-ratio scale: `exp(β ± 1.96·se)`.
    pub or_ci_low: Vec<f64>,
    pub or_ci_high: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// In-place Gauss–Jordan inversion with partial pivoting. `None` when a
/// pivot degenerates relative to the matrix scale (rank deficiency).
fn invert(m: &Array2<f64>) -> Option<Array2<f64>> {
    let k = m.nrows();
    let scale = m
        .diag()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut a = m.clone();
    let mut inv = Array2::eye(k);
    for col in 0..k {
        let pivot_row = (col..k)
            .max_by(|&i, &j| a[[i, col]].abs().partial_cmp(&a[[j, col]].abs()).unwrap())?;
        // The threshold must exceed the ridge added to the information
        // matrix, or a collinear column survives as a ridge-only pivot.
        if a[[pivot_row, col]].abs() < 1e-9 * scale {
            return None;
        }
        if pivot_row != col {
            for j in 0..k {
                a.swap([pivot_row, j], [col, j]);
                inv.swap([pivot_row, j], [col, j]);
            }
        }
        let pivot = a[[col, col]];
        for j in 0..k {
            a[[col, j]] /= pivot;
            inv[[col, j]] /= pivot;
        }
        for i in 0..k {
            if i != col {
                let factor = a[[i, col]];
                for j in 0..k {
                    a[[i, j]] -= factor * a[[col, j]];
                    inv[[i, j]] -= factor * inv[[col, j]];
                }
            }
        }
    }
    Some(inv)
}

/// Fit `P(y=1 | x) = σ(β₀ + β·x)` by IRLS.
///
/// `predictors` is n-by-k without an intercept column (one is added
/// internally). Convergence: max |Δβ| < 1e-8 within 100 iterations. The
/// information matrix carries a 1e-10 ridge for numerical rank safety.
/// Coefficients exceeding |β| > 30 abort with a separation error; a singular
/// information matrix aborts with a rank error.
pub fn logistic_fit(predictors: &ArrayView2<f64>, y: &[u8]) -> Result<LogisticFit> {
    let n = predictors.nrows();
    let k = predictors.ncols();
    if n != y.len() {
        return Err(Error::Contract(format!(
            "design matrix has {n} rows but y has {} entries",
            y.len()
        )));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::Data("outcomes must be 0 or 1".into()));
    }
    if !y.contains(&0) || !y.contains(&1) {
        return Err(Error::Estimation(
            "logistic fit needs both outcome classes present".into(),
        ));
    }
    if n <= k + 1 {
        return Err(Error::Estimation(format!(
            "logistic fit needs more observations ({n}) than parameters ({})",
            k + 1
        )));
    }
    if predictors.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite predictor value".into()));
    }
    for j in 0..k {
        let col = predictors.column(j);
        if col.iter().all(|&v| v == col[0]) {
            return Err(Error::Estimation(format!(
                "predictor column {j} is constant; drop it (an intercept is added internally)"
            )));
        }
    }

    // Design matrix with the intercept in column 0.
    let mut x = Array2::ones((n, k + 1));
    x.slice_mut(ndarray::s![.., 1..]).assign(predictors);
    let yv: Array1<f64> = y.iter().map(|&v| f64::from(v)).collect();

    let mut beta = Array1::<f64>::zeros(k + 1);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < 100 {
        iterations += 1;
        let eta = x.dot(&beta);
        let mu = eta.mapv(|e| 1.0 / (1.0 + (-e).exp()));
        let w = &mu * &mu.mapv(|m| 1.0 - m);

        // Fisher information XᵀWX (+ ridge) and score Xᵀ(y − μ).
        let xw = &x * &w.view().insert_axis(Axis(1));
        let mut info = x.t().dot(&xw);
        for d in 0..k + 1 {
            info[[d, d]] += 1e-10;
        }
        let score = x.t().dot(&(&yv - &mu));
        let info_inv = invert(&info).ok_or_else(|| {
            Error::Estimation(
                "information matrix is singular; predictors are collinear (rank deficiency)"
                    .into(),
            )
        })?;
        let delta = info_inv.dot(&score);
        beta += &delta;

        if beta.iter().any(|b| b.abs() > 30.0) {
            return Err(Error::Estimation(
                "perfect separation suspected: a coefficient magnitude exceeded 30".into(),
            ));
        }
        if delta.iter().all(|d| d.abs() < 1e-8) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Estimation(
            "logistic fit did not converge within 100 iterations".into(),
        ));
    }

    // Standard errors from the inverse information at the optimum.
    let eta = x.dot(&beta);
    let mu = eta.mapv(|e| 1.0 / (1.0 + (-e).exp()));
    let w = &mu * &mu.mapv(|m| 1.0 - m);
    let xw = &x * &w.view().insert_axis(Axis(1));
    let mut info = x.t().dot(&xw);
    for d in 0..k + 1 {
        info[[d, d]] += 1e-10;
    }
    let info_inv = invert(&info).ok_or_else(|| {
        Error::Estimation("information matrix is singular at the optimum".into())
    })?;
    let se: Vec<f64> = (0..k + 1).map(|j| info_inv[[j, j]].sqrt()).collect();

    let coefficients: Vec<f64> = beta.to_vec();
    let odds_ratios: Vec<f64> = coefficients.iter().map(|b| b.exp()).collect();
    let or_ci_low: Vec<f64> = coefficients
        .iter()
        .zip(&se)
        .map(|(b, s)| (b - 1.96 * s).exp())
        .collect();
    let or_ci_high: Vec<f64> = coefficients
        .iter()
        .zip(&se)
        .map(|(b, s)| (b + 1.96 * s).exp())
        .collect();

    Ok(LogisticFit {
        coefficients,
        std_errors: se,
        odds_ratios,
        or_ci_low,
        or_ci_high,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    /// Rows for a 2×2 table: a/b exposed positive/negative, c/d unexposed.
    fn two_by_two(a: usize, b: usize, c: usize, d: usize) -> (Array2<f64>, Vec<u8>) {
        let n = a + b + c + d;
        let mut x = Array2::zeros((n, 1));
        let mut y = Vec::with_capacity(n);
        let mut row = 0;
        for (exposed, outcome, count) in
            [(1.0, 1u8, a), (1.0, 0, b), (0.0, 1, c), (0.0, 0, d)]
        {
            for _ in 0..count {
                x[[row, 0]] = exposed;
                y.push(outcome);
                row += 1;
            }
        }
        (x, y)
    }

    #[test]
    fn two_by_two_matches_the_closed_form() {
        let (x, y) = two_by_two(40, 10, 20, 30);
        let fit = logistic_fit(&x.view(), &y).unwrap();
        let or = fit.odds_ratios[1];
        assert!((or - 6.0).abs() < 1e-6, "OR = {or}");

        let se_exact = (1.0f64 / 40.0 + 1.0 / 10.0 + 1.0 / 20.0 + 1.0 / 30.0).sqrt();
        assert!(
            (fit.std_errors[1] - se_exact).abs() < 1e-6,
            "se = {} vs {se_exact}",
            fit.std_errors[1]
        );
        assert!(fit.converged);
        assert!(fit.or_ci_low[1] <= or && or <= fit.or_ci_high[1]);
    }

    #[test]
    fn balanced_table_has_no_association() {
        let (x, y) = two_by_two(25, 25, 25, 25);
        let fit = logistic_fit(&x.view(), &y).unwrap();
        assert!(fit.coefficients[1].abs() < 1e-8);
        assert!((fit.odds_ratios[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn exponential_relationships_hold_between_fields() {
        let (x, y) = two_by_two(30, 20, 10, 40);
        let fit = logistic_fit(&x.view(), &y).unwrap();
        for j in 0..fit.coefficients.len() {
            assert!((fit.odds_ratios[j] - fit.coefficients[j].exp()).abs() < 1e-12);
            assert!(fit.or_ci_low[j] <= fit.odds_ratios[j]);
            assert!(fit.odds_ratios[j] <= fit.or_ci_high[j]);
        }
    }

    #[test]
    fn perfect_separation_is_detected() {
        let mut x = Array2::zeros((40, 1));
        let mut y = Vec::new();
        for i in 0..40 {
            x[[i, 0]] = if i < 20 { -1.0 } else { 1.0 };
            y.push(u8::from(i >= 20));
        }
        match logistic_fit(&x.view(), &y) {
            Err(Error::Estimation(msg)) => assert!(msg.contains("separation"), "msg: {msg}"),
            other => panic!("expected separation error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_predictors_are_a_rank_error() {
        let (base, y) = two_by_two(20, 15, 10, 25);
        let mut x = Array2::zeros((base.nrows(), 2));
        x.column_mut(0).assign(&base.column(0));
        x.column_mut(1).assign(&base.column(0));
        match logistic_fit(&x.view(), &y) {
            Err(Error::Estimation(msg)) => {
                assert!(
                    msg.contains("singular") || msg.contains("collinear"),
                    "msg: {msg}"
                )
            }
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn constant_predictor_and_single_class_are_rejected() {
        let x = Array2::from_elem((10, 1), 1.0);
        let y = vec![1, 0, 1, 0, 1, 0, 1, 0, 1, 0];
        assert!(logistic_fit(&x.view(), &y).is_err());

        let (x, _) = two_by_two(5, 5, 5, 5);
        assert!(logistic_fit(&x.view(), &vec![1u8; 20]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn prop_two_by_two_matches_closed_form(
            a in 5usize..40, b in 5usize..40, c in 5usize..40, d in 5usize..40,
        ) {
            let (x, y) = two_by_two(a, b, c, d);
            let fit = logistic_fit(&x.view(), &y).unwrap();
            let log_or = ((a as f64 * d as f64) / (b as f64 * c as f64)).ln();
            let se = (1.0 / a as f64 + 1.0 / b as f64 + 1.0 / c as f64 + 1.0 / d as f64).sqrt();
            prop_assert!((fit.coefficients[1] - log_or).abs() < 1e-6,
                "β = {} vs {log_or}", fit.coefficients[1]);
            prop_assert!((fit.std_errors[1] - se).abs() < 1e-6);
        }
    }
}
