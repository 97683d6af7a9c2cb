//! Paired t-test with explicit degenerate-case conventions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::special::two_sided_t_pvalue;

/// Result of a paired t-test on element-wise differences `a − b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    /// Two-sided p-value in [0, 1].
    pub p: f64,
    /// Degrees of freedom, n − 1.
    pub df: usize,
    pub mean_diff: f64,
    /// Sample standard deviation of the differences (n − 1 denominator).
    pub sd_diff: f64,
    /// Set when every difference is identical and nonzero: the statistic is
    /// unbounded and p is reported as 0 by convention.
    pub degenerate: bool,
}

/// Two-sided paired t-test of `a` against `b`.
///
/// Conventions for zero-variance differences: all-zero differences give
/// `t = 0, p = 1`; constant nonzero differences give `p = 0` with the
/// `degenerate` flag set (the statistic is infinite).
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "paired t-test needs equal-length samples, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Contract("paired t-test needs at least 2 pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Data("non-finite difference in paired t-test".into()));
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    let df = n - 1;

    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult { t: 0.0, p: 1.0, df, mean_diff: mean, sd_diff: sd, degenerate: false }
        } else {
            TTestResult {
                t: f64::INFINITY * mean.signum(),
                p: 0.0,
                df,
                mean_diff: mean,
                sd_diff: sd,
                degenerate: true,
            }
        });
    }

    let t = mean / (sd / (n as f64).sqrt());
    let p = two_sided_t_pvalue(t, df as f64);
    Ok(TTestResult { t, p, df, mean_diff: mean, sd_diff: sd, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alternating_differences_give_the_null() {
        let a = [1.0, 0.0, 1.0, 0.0];
        let b = [0.0, 1.0, 0.0, 1.0];
        let r = paired_t_test(&a, &b).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
        assert!(!r.degenerate);
    }

    #[test]
    fn identical_samples_follow_the_zero_convention() {
        let a = [0.3, 0.7, 0.9];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
        assert_eq!(r.df, 2);
        assert!(!r.degenerate);
    }

    #[test]
    fn constant_nonzero_shift_is_flagged_degenerate() {
        let a = [1.5, 2.5, 3.5];
        let b = [1.0, 2.0, 3.0];
        let r = paired_t_test(&a, &b).unwrap();
        assert_eq!(r.p, 0.0);
        assert!(r.degenerate);
        assert!(r.t.is_infinite() && r.t > 0.0);
    }

    #[test]
    fn hand_computed_case_one_through_five() {
        // Differences 1..5: mean 3, sd √2.5 ≈ 1.5811, t = 3/(sd/√5) ≈ 4.2426.
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [0.0; 5];
        let r = paired_t_test(&a, &b).unwrap();
        assert!((r.t - 4.2426).abs() < 1e-3, "t = {}", r.t);
        assert!((r.p - 0.0132).abs() < 1e-3, "p = {}", r.p);
        assert_eq!(r.df, 4);
        assert!((r.sd_diff - 2.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn shape_violations_are_contract_errors() {
        assert!(paired_t_test(&[1.0], &[1.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn prop_antisymmetry(
            a in proptest::collection::vec(-10.0f64..10.0, 2..40),
            shift in -3.0f64..3.0,
        ) {
            let b: Vec<f64> = a.iter().map(|x| x + shift * (x.abs() + 0.1)).collect();
            let ab = paired_t_test(&a, &b).unwrap();
            let ba = paired_t_test(&b, &a).unwrap();
            if ab.degenerate || ba.degenerate {
                prop_assert_eq!(ab.degenerate, ba.degenerate);
            } else {
                prop_assert!((ab.t + ba.t).abs() < 1e-9, "t {} vs {}", ab.t, ba.t);
                prop_assert!((ab.p - ba.p).abs() < 1e-12);
            }
            prop_assert!((0.0..=1.0).contains(&ab.p));
        }
    }
}
