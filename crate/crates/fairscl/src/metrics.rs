//! Ranking and calibration metrics over scored predictions, with subgroup
//! breakdowns.
//!
//! The central quantity is the per-subgroup marginal AUC: the probability
//! that a positive drawn from one category outranks a negative drawn from
//! the *entire* evaluation set, with ties counting one half. Spread between
//! the best- and worst-ranked category (`max − min`) summarizes how unevenly
//! a score function serves the subgroups; the same spread is reported for
//! TPR, FPR, and the Brier score at a decision threshold.
//!
//! AUCs are computed by sort-and-midrank. Rank sums are sums of halves, so
//! results are exactly equal (not merely close) to the brute-force count
//! over all positive/negative pairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::SubgroupView;
use crate::error::{Error, Result};

/// Scores aligned with labels and per-attribute category assignments.
///
/// Construction validates equal lengths, finite scores, and binary labels.
/// Group assignments for any number of attributes travel with the scores so
/// resampled copies stay internally consistent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
    groups: BTreeMap<String, Vec<String>>,
}

impl ScoredSet {
    pub fn new(
        scores: Vec<f64>,
        labels: Vec<u8>,
        groups: BTreeMap<String, Vec<String>>,
    ) -> Result<ScoredSet> {
        if scores.len() != labels.len() {
            return Err(Error::Contract(format!(
                "scores ({}) and labels ({}) must have equal length",
                scores.len(),
                labels.len()
            )));
        }
        if scores.is_empty() {
            return Err(Error::Contract("scored set is empty".into()));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Data(format!("non-finite score {bad}")));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Data("labels must be 0 or 1".into()));
        }
        for (attr, vals) in &groups {
            if vals.len() != scores.len() {
                return Err(Error::Contract(format!(
                    "attribute '{attr}' has {} assignments for {} scores",
                    vals.len(),
                    scores.len()
                )));
            }
        }
        Ok(ScoredSet { scores, labels, groups })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }

    /// Per-record category values for one attribute.
    pub fn attribute_values(&self, attribute: &str) -> Result<&[String]> {
        self.groups
            .get(attribute)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Data(format!("attribute '{attribute}' not present")))
    }

    /// Sorted distinct categories of one attribute.
    pub fn categories(&self, attribute: &str) -> Result<Vec<String>> {
        let vals = self.attribute_values(attribute)?;
        let mut cats: Vec<String> = vals.to_vec();
        cats.sort_unstable();
        cats.dedup();
        Ok(cats)
    }

    /// Membership masks for one attribute.
    pub fn view(&self, attribute: &str) -> Result<SubgroupView> {
        Ok(SubgroupView::from_assignments(
            attribute,
            self.attribute_values(attribute)?,
        ))
    }

    /// A with-replacement resample: record `k` of the result copies record
    /// `indices[k]` (score, label, and every group assignment jointly).
    pub fn resample(&self, indices: &[usize]) -> Result<ScoredSet> {
        if indices.is_empty() {
            return Err(Error::Contract("resample needs at least one index".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Contract(format!(
                "resample index {bad} out of range for {} records",
                self.len()
            )));
        }
        Ok(ScoredSet {
            scores: indices.iter().map(|&i| self.scores[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            groups: self
                .groups
                .iter()
                .map(|(a, vals)| {
                    (a.clone(), indices.iter().map(|&i| vals[i].clone()).collect())
                })
                .collect(),
        })
    }
}

/// Area under the ROC curve by midrank Mann–Whitney statistic; ties count ½.
fn rank_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores validated finite"));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // Tied block occupies ranks i+1..=j; each member gets the midrank.
        let midrank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = all[i..j].iter().filter(|e| e.1).count();
        rank_sum_pos += midrank * tied_pos as f64;
        i = j;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn)
}

/// Overall AUC of the scored set. Errors if either class is absent.
pub fn auc(s: &ScoredSet) -> Result<f64> {
    let pos: Vec<f64> = s
        .scores
        .iter()
        .zip(&s.labels)
        .filter(|(_, &l)| l == 1)
        .map(|(&v, _)| v)
        .collect();
    let neg: Vec<f64> = s
        .scores
        .iter()
        .zip(&s.labels)
        .filter(|(_, &l)| l == 0)
        .map(|(&v, _)| v)
        .collect();
    if pos.is_empty() {
        return Err(Error::UndefinedMetric {
            metric: "AUC".into(),
            subject: "scored set".into(),
            reason: "no positive records".into(),
        });
    }
    if neg.is_empty() {
        return Err(Error::UndefinedMetric {
            metric: "AUC".into(),
            subject: "scored set".into(),
            reason: "no negative records".into(),
        });
    }
    Ok(rank_auc(&pos, &neg))
}

/// Marginal AUC of one category: positives restricted to the category,
/// negatives drawn from the whole set.
pub fn marginal_auc(s: &ScoredSet, attribute: &str, category: &str) -> Result<f64> {
    let values = s.attribute_values(attribute)?;
    if !values.iter().any(|v| v == category) {
        return Err(Error::Data(format!(
            "category '{category}' not present for attribute '{attribute}'"
        )));
    }
    let pos: Vec<f64> = (0..s.len())
        .filter(|&i| s.labels[i] == 1 && values[i] == category)
        .map(|i| s.scores[i])
        .collect();
    if pos.is_empty() {
        return Err(Error::UndefinedMetric {
            metric: "marginal AUC".into(),
            subject: format!("category '{category}' of attribute '{attribute}'"),
            reason: "no positive records in category".into(),
        });
    }
    let neg: Vec<f64> = (0..s.len())
        .filter(|&i| s.labels[i] == 0)
        .map(|i| s.scores[i])
        .collect();
    if neg.is_empty() {
        return Err(Error::UndefinedMetric {
            metric: "marginal AUC".into(),
            subject: format!("category '{category}' of attribute '{attribute}'"),
            reason: "no negative records in the full set".into(),
        });
    }
    Ok(rank_auc(&pos, &neg))
}

/// Per-category performance at a decision threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub n: usize,
    pub n_positive: usize,
    pub marginal_auc: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub brier: f64,
}

/// Max-minus-min spreads across categories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessDeltas {
    pub marginal_auc: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub brier: f64,
}

/// Subgroup fairness summary for one attribute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub attribute: String,
    pub threshold: f64,
    pub overall_auc: f64,
    pub per_group: BTreeMap<String, GroupMetrics>,
    pub deltas: FairnessDeltas,
}

/// Full subgroup report: overall AUC, per-category marginal AUC / TPR / FPR /
/// Brier score, and the max−min delta of each. Predictions binarize as
/// `score ≥ threshold`; scores must be probabilities (Brier needs [0, 1]).
pub fn fairness_report(s: &ScoredSet, attribute: &str, threshold: f64) -> Result<FairnessReport> {
    if !threshold.is_finite() {
        return Err(Error::Config(format!("threshold must be finite, got {threshold}")));
    }
    if let Some(bad) = s.scores.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Data(format!(
            "fairness report requires probability scores in [0, 1]; found {bad}"
        )));
    }
    let overall_auc = auc(s)?;
    let values = s.attribute_values(attribute)?;
    let categories = s.categories(attribute)?;

    let mut per_group = BTreeMap::new();
    for cat in &categories {
        let idx: Vec<usize> = (0..s.len()).filter(|&i| &values[i] == cat).collect();
        let n = idx.len();
        let n_positive = idx.iter().filter(|&&i| s.labels[i] == 1).count();
        let n_negative = n - n_positive;
        let subject = format!("category '{cat}' of attribute '{attribute}'");
        if n_positive == 0 {
            return Err(Error::UndefinedMetric {
                metric: "TPR and marginal AUC".into(),
                subject,
                reason: "no positive records in category".into(),
            });
        }
        if n_negative == 0 {
            return Err(Error::UndefinedMetric {
                metric: "FPR".into(),
                subject,
                reason: "no negative records in category".into(),
            });
        }

        let mauc = marginal_auc(s, attribute, cat)?;
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut brier = 0.0;
        for &i in &idx {
            let predicted_pos = s.scores[i] >= threshold;
            match (s.labels[i], predicted_pos) {
                (1, true) => tp += 1,
                (0, true) => fp += 1,
                _ => {}
            }
            let diff = s.scores[i] - f64::from(s.labels[i]);
            brier += diff * diff;
        }
        per_group.insert(
            cat.clone(),
            GroupMetrics {
                n,
                n_positive,
                marginal_auc: mauc,
                tpr: tp as f64 / n_positive as f64,
                fpr: fp as f64 / n_negative as f64,
                brier: brier / n as f64,
            },
        );
    }

    let spread = |f: fn(&GroupMetrics) -> f64| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for g in per_group.values() {
            lo = lo.min(f(g));
            hi = hi.max(f(g));
        }
        hi - lo
    };
    let deltas = FairnessDeltas {
        marginal_auc: spread(|g| g.marginal_auc),
        tpr: spread(|g| g.tpr),
        fpr: spread(|g| g.fpr),
        brier: spread(|g| g.brier),
    };

    Ok(FairnessReport {
        attribute: attribute.to_string(),
        threshold,
        overall_auc,
        per_group,
        deltas,
    })
}

/// Absolute and percent change from a baseline value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelChange {
    pub absolute: f64,
    /// `100 · absolute / baseline`; `None` when the baseline is exactly zero
    /// and the relative change is undefined.
    pub relative_pct: Option<f64>,
}

/// Change from `baseline` to `proposed`, absolute and in percent.
pub fn relative_change(baseline: f64, proposed: f64) -> RelChange {
    let absolute = proposed - baseline;
    let relative_pct = (baseline != 0.0).then(|| 100.0 * absolute / baseline);
    RelChange { absolute, relative_pct }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force pair counting: the definition, kept as an oracle.
    fn pair_count_auc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut total = 0.0;
        for &p in pos {
            for &n in neg {
                if p > n {
                    total += 1.0;
                } else if p == n {
                    total += 0.5;
                }
            }
        }
        total / (pos.len() as f64 * neg.len() as f64)
    }

    fn set(scores: Vec<f64>, labels: Vec<u8>, cats: &[&str]) -> ScoredSet {
        ScoredSet::new(
            scores,
            labels,
            BTreeMap::from([(
                "g".to_string(),
                cats.iter().map(|c| c.to_string()).collect(),
            )]),
        )
        .unwrap()
    }

    #[test]
    fn auc_handles_perfect_tied_and_mixed_rankings() {
        let s = set(vec![0.9, 0.8, 0.2, 0.1], vec![1, 1, 0, 0], &["A", "A", "A", "A"]);
        assert_eq!(auc(&s).unwrap(), 1.0);

        let s = set(vec![0.5, 0.5], vec![1, 0], &["A", "A"]);
        assert_eq!(auc(&s).unwrap(), 0.5);

        // 4 pairs: 0.8>0.6 ✓, 0.8>0.2 ✓, 0.4<0.6 ✗, 0.4>0.2 ✓ → 3/4.
        let s = set(vec![0.8, 0.6, 0.4, 0.2], vec![1, 0, 1, 0], &["A"; 4]);
        assert_eq!(auc(&s).unwrap(), 0.75);
    }

    #[test]
    fn auc_errors_when_a_class_is_missing() {
        let s = set(vec![0.1, 0.2], vec![1, 1], &["A", "A"]);
        assert!(matches!(auc(&s), Err(Error::UndefinedMetric { .. })));
    }

    #[test]
    fn marginal_auc_uses_global_negatives() {
        let s = set(
            vec![0.9, 0.3, 0.7, 0.5],
            vec![1, 0, 1, 0],
            &["A", "A", "B", "B"],
        );
        assert_eq!(marginal_auc(&s, "g", "A").unwrap(), 1.0);
        assert_eq!(marginal_auc(&s, "g", "B").unwrap(), 1.0);
    }

    #[test]
    fn marginal_auc_dominance_of_the_top_score() {
        let s = set(
            vec![0.99, 0.1, 0.8, 0.7, 0.6],
            vec![1, 0, 0, 1, 0],
            &["A", "A", "B", "B", "B"],
        );
        // A's single positive holds the globally highest score.
        assert_eq!(marginal_auc(&s, "g", "A").unwrap(), 1.0);
    }

    #[test]
    fn marginal_auc_errors_name_the_category() {
        let s = set(vec![0.9, 0.3, 0.5], vec![0, 1, 0], &["A", "B", "B"]);
        match marginal_auc(&s, "g", "A") {
            Err(Error::UndefinedMetric { subject, .. }) => {
                assert!(subject.contains("'A'"), "subject: {subject}")
            }
            other => panic!("expected undefined-metric error, got {other:?}"),
        }
    }

    #[test]
    fn fairness_report_on_a_perfect_classifier() {
        let s = set(
            vec![1.0, 0.0, 1.0, 0.0],
            vec![1, 0, 1, 0],
            &["A", "A", "B", "B"],
        );
        let r = fairness_report(&s, "g", 0.5).unwrap();
        assert_eq!(r.overall_auc, 1.0);
        for g in r.per_group.values() {
            assert_eq!(g.tpr, 1.0);
            assert_eq!(g.fpr, 0.0);
            assert_eq!(g.brier, 0.0);
        }
        assert_eq!(r.deltas.marginal_auc, 0.0);
        assert_eq!(r.deltas.tpr, 0.0);
        assert_eq!(r.deltas.fpr, 0.0);
        assert_eq!(r.deltas.brier, 0.0);
    }

    #[test]
    fn fairness_report_matches_hand_computed_confusion_tables() {
        // 12 records, two categories, threshold 0.5.
        //
        // Category A (6): labels 1,1,1,0,0,0; predictions 1,1,0,1,0,0
        //   → TP=2 FN=1 FP=1 TN=2 → TPR=2/3, FPR=1/3.
        // Category B (6): labels 1,1,0,0,0,0; predictions 1,0,0,0,0,1
        //   → TP=1 FN=1 FP=1 TN=3 → TPR=1/2, FPR=1/4.
        let scores = vec![
            0.9, 0.8, 0.3, 0.7, 0.2, 0.1, // A
            0.6, 0.4, 0.25, 0.15, 0.05, 0.95, // B
        ];
        let labels = vec![1, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0];
        let cats = ["A", "A", "A", "A", "A", "A", "B", "B", "B", "B", "B", "B"];
        let s = set(scores.clone(), labels.clone(), &cats);
        let r = fairness_report(&s, "g", 0.5).unwrap();

        assert_eq!(r.per_group["A"].tpr, 2.0 / 3.0);
        assert_eq!(r.per_group["A"].fpr, 1.0 / 3.0);
        assert_eq!(r.per_group["B"].tpr, 0.5);
        assert_eq!(r.per_group["B"].fpr, 0.25);
        assert_eq!(r.per_group["A"].n, 6);
        assert_eq!(r.per_group["B"].n_positive, 2);

        // Brier by hand for A: mean of (s−y)² over its six records.
        let brier_a: f64 = [0.9f64 - 1.0, 0.8 - 1.0, 0.3 - 1.0, 0.7, 0.2, 0.1]
            .iter()
            .map(|d| d * d)
            .sum::<f64>()
            / 6.0;
        assert!((r.per_group["A"].brier - brier_a).abs() < 1e-15);

        assert!((r.deltas.tpr - (2.0 / 3.0 - 0.5)).abs() < 1e-15);
        assert!((r.deltas.fpr - (1.0 / 3.0 - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn fairness_report_errors_name_category_and_metric() {
        // Category B has no negatives → FPR undefined.
        let s = set(
            vec![0.9, 0.1, 0.8, 0.7],
            vec![1, 0, 1, 1],
            &["A", "A", "B", "B"],
        );
        match fairness_report(&s, "g", 0.5) {
            Err(Error::UndefinedMetric { metric, subject, .. }) => {
                assert!(metric.contains("FPR"), "metric: {metric}");
                assert!(subject.contains("'B'"), "subject: {subject}");
            }
            other => panic!("expected undefined-metric error, got {other:?}"),
        }
    }

    #[test]
    fn relative_change_matches_published_style_values() {
        let c = relative_change(0.0116, 0.0037);
        assert!((c.relative_pct.unwrap() - -68.10).abs() < 0.01);
        assert!((c.absolute - -0.0079).abs() < 1e-12);

        let c = relative_change(0.42, 0.42);
        assert_eq!(c.absolute, 0.0);
        assert_eq!(c.relative_pct, Some(0.0));

        let c = relative_change(0.8167, 0.8085);
        assert!((c.relative_pct.unwrap() - -1.0040).abs() < 0.001);
        assert!((c.absolute - -0.0082).abs() < 1e-12);

        let c = relative_change(0.0, 0.5);
        assert_eq!(c.relative_pct, None);
        assert_eq!(c.absolute, 0.5);
    }

    #[test]
    fn single_category_delta_is_exactly_zero() {
        let s = set(vec![0.9, 0.4, 0.6, 0.2], vec![1, 0, 1, 0], &["A"; 4]);
        let r = fairness_report(&s, "g", 0.5).unwrap();
        assert_eq!(r.deltas.marginal_auc, 0.0);
        assert_eq!(r.per_group["A"].marginal_auc, r.overall_auc);
    }

    fn random_scored_set(
        seed: u64,
        max_n: usize,
        n_cats: usize,
        force_ties: bool,
    ) -> ScoredSet {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        loop {
            let n = rng.random_range(4..=max_n);
            let scores: Vec<f64> = (0..n)
                .map(|_| {
                    if force_ties && rng.random_bool(0.5) {
                        (rng.random_range(0..10) as f64) / 10.0
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect();
            let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
            let cats: Vec<String> = (0..n)
                .map(|_| format!("g{}", rng.random_range(0..n_cats)))
                .collect();
            if labels.iter().any(|&l| l == 1) && labels.iter().any(|&l| l == 0) {
                return ScoredSet::new(
                    scores,
                    labels,
                    BTreeMap::from([("g".to_string(), cats)]),
                )
                .unwrap();
            }
        }
    }

    #[test]
    fn rank_auc_equals_pair_count_on_random_sets_with_ties() {
        for seed in 0..200 {
            let s = random_scored_set(seed, 120, 3, true);
            for cat in s.categories("g").unwrap() {
                let values = s.attribute_values("g").unwrap();
                let pos: Vec<f64> = (0..s.len())
                    .filter(|&i| s.labels()[i] == 1 && values[i] == cat)
                    .map(|i| s.scores()[i])
                    .collect();
                if pos.is_empty() {
                    continue;
                }
                let neg: Vec<f64> = (0..s.len())
                    .filter(|&i| s.labels()[i] == 0)
                    .map(|i| s.scores()[i])
                    .collect();
                let fast = marginal_auc(&s, "g", &cat).unwrap();
                let slow = pair_count_auc(&pos, &neg);
                assert!(
                    (fast - slow).abs() <= 1e-12,
                    "seed {seed} category {cat}: {fast} vs {slow}"
                );
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]

        #[test]
        fn prop_rank_invariance_under_increasing_transforms(seed in 0u64..10_000) {
            let s = random_scored_set(seed, 60, 2, false);
            let base = auc(&s).unwrap();
            for transform in [|x: f64| x * x * x, |x: f64| 2.0 * x + 1.0] {
                let t = ScoredSet::new(
                    s.scores().iter().map(|&x| transform(x)).collect(),
                    s.labels().to_vec(),
                    BTreeMap::from([(
                        "g".to_string(),
                        s.attribute_values("g").unwrap().to_vec(),
                    )]),
                ).unwrap();
                prop_assert!((auc(&t).unwrap() - base).abs() <= 1e-12);
                for cat in s.categories("g").unwrap() {
                    // Categories without positives have no marginal AUC.
                    let Ok(original) = marginal_auc(&s, "g", &cat) else {
                        continue;
                    };
                    prop_assert!((marginal_auc(&t, "g", &cat).unwrap() - original).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn prop_complement_symmetry(seed in 0u64..10_000) {
            let s = random_scored_set(seed, 60, 2, false); // continuous → tie-free
            let flipped = ScoredSet::new(
                s.scores().iter().map(|&x| 1.0 - x).collect(),
                s.labels().iter().map(|&l| 1 - l).collect(),
                BTreeMap::from([("g".to_string(), s.attribute_values("g").unwrap().to_vec())]),
            ).unwrap();
            prop_assert!((auc(&flipped).unwrap() - auc(&s).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn prop_brier_bounded_for_probability_scores(seed in 0u64..10_000) {
            let s = random_scored_set(seed, 60, 3, true);
            if let Ok(r) = fairness_report(&s, "g", 0.5) {
                for g in r.per_group.values() {
                    prop_assert!((0.0..=1.0).contains(&g.brier));
                    prop_assert!((0.0..=1.0).contains(&g.marginal_auc));
                }
                prop_assert!(r.deltas.marginal_auc >= 0.0);
                prop_assert!(r.deltas.brier >= 0.0);
            }
        }
    }
}
