//! Percentile bootstrap over scored sets.
//!
//! Replicate `b` draws its indices from a dedicated generator seeded with
//! `seed ^ mix64(b)`, so replicates are reproducible independently of
//! execution order or worker count. Resamples on which the metric is
//! undefined (a category losing all its positives, say) are redrawn from the
//! same replicate stream, keeping the replicate count fixed; a global
//! attempt budget of `50·B` bounds the retries.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ScoredSet;
use crate::seeding::mix64;

/// Point estimate with a 95% percentile interval over B replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Metric on the full (un-resampled) set.
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub b: usize,
    pub seed: u64,
    /// Resamples discarded because the metric was undefined on them.
    pub redraws: usize,
    /// Replicate values in replicate order. Skipped during serialization;
    /// deserialized results carry an empty vector.
    #[serde(skip)]
    pub replicates: Vec<f64>,
}

impl BootstrapResult {
    /// Assemble a result from precomputed replicate values (used when several
    /// metrics share one set of resample index vectors).
    pub fn from_replicates(
        point: f64,
        replicates: Vec<f64>,
        seed: u64,
        redraws: usize,
    ) -> Result<BootstrapResult> {
        if replicates.len() < 2 {
            return Err(Error::Contract(format!(
                "confidence interval needs ≥ 2 replicates, got {}",
                replicates.len()
            )));
        }
        let mut sorted = replicates.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite replicate values"));
        Ok(BootstrapResult {
            point,
            ci_low: percentile(&sorted, 2.5),
            ci_high: percentile(&sorted, 97.5),
            b: replicates.len(),
            seed,
            redraws,
            replicates,
        })
    }
}

/// Interpolated percentile of an ascending-sorted slice: rank
/// `(n−1)·pct/100`, linear between neighbors.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty slice");
    let rank = (sorted.len() - 1) as f64 * pct / 100.0;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = rank - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// The dedicated generator for one bootstrap replicate.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ mix64(replicate))
}

/// One with-replacement index vector of length `n`.
pub fn draw_indices<R: RngExt>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Percentile bootstrap of `metric` over `s` with `b` replicates.
///
/// The metric must be defined on the full set. Undefined-metric resamples
/// are redrawn (counted in `redraws`); more than `50·b` total attempts is an
/// infeasibility error. Any other metric error propagates immediately.
pub fn bootstrap<F>(metric: F, s: &ScoredSet, b: usize, seed: u64) -> Result<BootstrapResult>
where
    F: Fn(&ScoredSet) -> Result<f64>,
{
    if b < 2 {
        return Err(Error::Config(format!("bootstrap needs B ≥ 2 replicates, got {b}")));
    }
    let point = metric(s)?;
    let n = s.len();
    let budget = 50 * b;
    let mut attempts = 0usize;
    let mut redraws = 0usize;
    let mut replicates = Vec::with_capacity(b);

    for rep in 0..b {
        let mut rng = replicate_rng(seed, rep as u64);
        loop {
            attempts += 1;
            if attempts > budget {
                return Err(Error::BootstrapInfeasible { attempts: budget, replicates: b - rep });
            }
            let resampled = s.resample(&draw_indices(&mut rng, n))?;
            match metric(&resampled) {
                Ok(v) => {
                    replicates.push(v);
                    break;
                }
                Err(Error::UndefinedMetric { .. }) => {
                    redraws += 1;
                    // Redraw from the same replicate stream: deterministic,
                    // and independent of every other replicate.
                }
                Err(other) => return Err(other),
            }
        }
    }
    BootstrapResult::from_replicates(point, replicates, seed, redraws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::auc;
    use std::collections::BTreeMap;

    fn label_set(labels: Vec<u8>) -> ScoredSet {
        let scores = labels.iter().map(|&l| f64::from(l) * 0.5 + 0.25).collect();
        ScoredSet::new(scores, labels, BTreeMap::new()).unwrap()
    }

    #[test]
    fn constant_metric_gives_a_zero_width_interval() {
        let s = label_set(vec![1, 0, 1, 0, 1]);
        let r = bootstrap(|_| Ok(0.7), &s, 50, 3).unwrap();
        assert_eq!(r.point, 0.7);
        assert_eq!((r.ci_low, r.ci_high), (0.7, 0.7));
        assert_eq!(r.redraws, 0);
        assert_eq!(r.replicates.len(), 50);
    }

    #[test]
    fn replicate_vectors_are_deterministic() {
        let s = label_set(vec![1, 0, 0, 1, 1, 0, 1, 0]);
        let metric = |x: &ScoredSet| Ok(x.labels().iter().map(|&l| f64::from(l)).sum::<f64>());
        let a = bootstrap(metric, &s, 40, 9).unwrap();
        let b = bootstrap(metric, &s, 40, 9).unwrap();
        assert_eq!(a.replicates, b.replicates);
        let c = bootstrap(metric, &s, 40, 10).unwrap();
        assert_ne!(a.replicates, c.replicates);
    }

    /// Exact quantile of Binomial(n, p) by direct CDF inversion.
    fn binomial_quantile(n: usize, p: f64, q: f64) -> f64 {
        let mut cdf = 0.0;
        let mut pmf = (1.0 - p).powi(n as i32); // P(X = 0)
        for k in 0..=n {
            cdf += pmf;
            if cdf >= q {
                return k as f64;
            }
            pmf *= (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
        }
        n as f64
    }

    #[test]
    fn mean_label_interval_matches_binomial_quantiles() {
        // 37 positives among 100: the replicate mean is Binomial(100, 0.37)/100.
        let mut labels = vec![1u8; 37];
        labels.extend(vec![0u8; 63]);
        let s = label_set(labels);
        let metric = |x: &ScoredSet| {
            Ok(x.labels().iter().map(|&l| f64::from(l)).sum::<f64>() / x.len() as f64)
        };
        let r = bootstrap(metric, &s, 2000, 11).unwrap();
        let lo = binomial_quantile(100, 0.37, 0.025) / 100.0;
        let hi = binomial_quantile(100, 0.37, 0.975) / 100.0;
        // The replicate mean lives on a 0.01 lattice and the exact quantile
        // sits where the CDF crosses 2.5%, so allow 1.5 lattice steps.
        assert!((r.ci_low - lo).abs() <= 0.015, "low {} vs {lo}", r.ci_low);
        assert!((r.ci_high - hi).abs() <= 0.015, "high {} vs {hi}", r.ci_high);
    }

    #[test]
    fn undefined_resamples_are_redrawn_and_counted() {
        // One positive among four: many resamples lose it, making AUC
        // undefined; they must be redrawn, not skipped.
        let s = ScoredSet::new(
            vec![0.9, 0.3, 0.2, 0.1],
            vec![1, 0, 0, 0],
            BTreeMap::new(),
        )
        .unwrap();
        let r = bootstrap(auc, &s, 100, 5).unwrap();
        assert_eq!(r.replicates.len(), 100);
        assert!(r.redraws > 0, "with 4 records, some resamples must go all-negative");
        assert!(r.replicates.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn hopeless_metrics_hit_the_attempt_budget() {
        let s = label_set(vec![1, 0, 1]);
        // Defined on the point evaluation, undefined on every resample.
        let calls = std::cell::Cell::new(0usize);
        let r = bootstrap(
            |_| {
                calls.set(calls.get() + 1);
                if calls.get() == 1 {
                    Ok(1.0)
                } else {
                    Err(Error::UndefinedMetric {
                        metric: "test".into(),
                        subject: "anything".into(),
                        reason: "always undefined on resamples".into(),
                    })
                }
            },
            &s,
            10,
            0,
        );
        match r {
            Err(Error::BootstrapInfeasible { attempts, .. }) => assert_eq!(attempts, 500),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn interval_lies_within_the_replicate_range() {
        let s = label_set(vec![1, 0, 1, 0, 1, 1, 0, 0, 1, 0]);
        let r = bootstrap(auc, &s, 200, 21).unwrap();
        let lo = r.replicates.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = r.replicates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(r.ci_low >= lo && r.ci_high <= hi);
        assert!(r.ci_low <= r.ci_high);
    }

    #[test]
    fn percentile_interpolates_linearly() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 5.0);
        assert_eq!(percentile(&v, 50.0), 3.0);
        assert_eq!(percentile(&v, 25.0), 2.0);
        // rank = 4 · 0.025 = 0.1 → 1.0 + 0.1 · (2 − 1).
        assert!((percentile(&v, 2.5) - 1.1).abs() < 1e-12);
    }
}
