//! Synthetic tabular data with a controllable group-correlated shortcut.
//!
//! The bias mechanism mirrors how prevalence imbalance corrupts a learned
//! ranker: one group has a higher positive rate than the other, and one
//! feature marks group membership. A plain learner reads the marker as label
//! evidence (it is, through the prevalence association), which shifts every
//! score in the low-prevalence group downward — its positives are then
//! under-ranked against the whole negative pool, and the marginal-AUC gap
//! opens. The marker carries no label information *within* either group, so
//! a learner that ignores it loses only the small prior advantage.
//!
//! Each record carries one binary group attribute and `feature_dim` features:
//!
//! - feature 0 is the label signal: `(2y−1)·signal_strength` plus unit
//!   Gaussian noise, identical in both groups;
//! - feature 1 is the shortcut: a group marker at `±shortcut_strength` plus
//!   noise, positive in one group and negative in the other, independent of
//!   the label;
//! - remaining features are pure noise.
//!
//! Group sizes and per-group positive counts are apportioned exactly
//! (largest-remainder rounding), so the group–label association is set by the
//! `prevalence` configuration rather than left to sampling noise.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Record};
use crate::error::{Error, Result};

/// Shape and strength parameters for [`generate_synthetic`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Number of records (≥ 40).
    pub n: usize,
    /// Feature vector length (≥ 2: signal + shortcut).
    pub feature_dim: usize,
    /// Name of the single group attribute.
    pub attribute: String,
    /// Exactly two category names.
    pub categories: Vec<String>,
    /// Population share per category; must sum to 1.
    pub proportions: Vec<f64>,
    /// Positive-label prevalence per category, each in (0, 1). Unequal
    /// values plant the group–label association a shortcut-using learner
    /// exploits; equal values make the marker useless.
    pub prevalence: Vec<f64>,
    /// Label-to-feature-0 mean offset (per class, so class means sit
    /// 2·signal_strength apart).
    pub signal_strength: f64,
    /// Group-to-feature-1 mean offset (0 disables the shortcut entirely).
    pub shortcut_strength: f64,
    /// Index of the category whose marker points negative.
    pub shortcut_flipped: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 5000,
            feature_dim: 6,
            attribute: "group".into(),
            categories: vec!["A".into(), "B".into()],
            proportions: vec![0.7, 0.3],
            prevalence: vec![0.7, 0.25],
            signal_strength: 1.0,
            shortcut_strength: 2.0,
            shortcut_flipped: 1,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.n < 40 {
            return Err(Error::Config(format!(
                "synthetic n must be ≥ 40 for stable pairwise metrics, got {}",
                self.n
            )));
        }
        if self.feature_dim < 2 {
            return Err(Error::Config(
                "synthetic feature_dim must be ≥ 2 (signal + shortcut)".into(),
            ));
        }
        if self.categories.len() != 2
            || self.proportions.len() != 2
            || self.prevalence.len() != 2
        {
            return Err(Error::Config(
                "synthetic data uses exactly two categories; categories, proportions, and \
                 prevalence must each have length 2"
                    .into(),
            ));
        }
        if self.categories[0] == self.categories[1] {
            return Err(Error::Config("category names must be distinct".into()));
        }
        let sum: f64 = self.proportions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "proportions must sum to 1 (±1e-9), got {sum}"
            )));
        }
        if self.proportions.iter().any(|&p| p <= 0.0) {
            return Err(Error::Config("proportions must be positive".into()));
        }
        if self.prevalence.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Config("prevalence values must lie in (0, 1)".into()));
        }
        for (name, v) in [
            ("signal_strength", self.signal_strength),
            ("shortcut_strength", self.shortcut_strength),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        if self.shortcut_flipped >= 2 {
            return Err(Error::Config(format!(
                "shortcut_flipped must index one of the two categories, got {}",
                self.shortcut_flipped
            )));
        }
        Ok(())
    }
}

/// Split `total` into integer parts proportional to `weights`, assigning
/// leftover units to the largest fractional remainders (ties to the earliest
/// index). The parts always sum to `total`.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let wsum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / wsum).collect();
    let mut parts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let (fi, fj) = (exact[i] - exact[i].floor(), exact[j] - exact[j].floor());
        fj.partial_cmp(&fi).unwrap().then(i.cmp(&j))
    });
    for k in 0..total - assigned {
        parts[order[k % weights.len()]] += 1;
    }
    parts
}

/// Generate a biased synthetic dataset. Bit-for-bit reproducible for a fixed
/// `(config, seed)` pair.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let sizes = apportion(config.n, &config.proportions);
    let id_width = config.n.to_string().len().max(4);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(config.n);
    let mut serial = 0usize;
    for (g, (category, &size)) in config.categories.iter().zip(&sizes).enumerate() {
        let n_pos = apportion(size, &[config.prevalence[g], 1.0 - config.prevalence[g]])[0];
        let marker = if g == config.shortcut_flipped { -1.0 } else { 1.0 };
        for i in 0..size {
            let label = u8::from(i < n_pos);
            let sign = f64::from(label) * 2.0 - 1.0;
            let mut features: Vec<f64> = (0..config.feature_dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            features[0] += sign * config.signal_strength;
            features[1] += marker * config.shortcut_strength;
            serial += 1;
            records.push(Record {
                id: format!("synth-{serial:0id_width$}"),
                label,
                groups: BTreeMap::from([(config.attribute.clone(), category.clone())]),
                features,
            });
        }
    }
    Dataset::new(records)
}
