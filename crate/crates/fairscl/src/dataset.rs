//! Validated record tables: binary labels, named group attributes, dense
//! features. The container is immutable after construction, so derived
//! indices (category lists, masks) stay valid for its lifetime.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labeled observation: a stable id, a binary label, one category value
/// per group attribute, and a dense feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub label: u8,
    pub groups: BTreeMap<String, String>,
    pub features: Vec<f64>,
}

/// An immutable, validated collection of [`Record`]s.
///
/// Construction enforces: uniform feature dimension, finite features, labels
/// in {0, 1}, unique ids, and an identical set of attribute names on every
/// record. Attributes with a single observed category are kept but flagged
/// unusable for fairness evaluation (see [`Dataset::usable_attributes`]).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
    feature_dim: usize,
    categories: BTreeMap<String, Vec<String>>,
}

/// Per-category membership masks for one attribute. The masks partition the
/// record set: every record is in exactly one category's mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgroupView {
    pub attribute: String,
    pub masks: BTreeMap<String, Vec<bool>>,
}

impl SubgroupView {
    /// Build masks from one category value per record.
    pub fn from_assignments(attribute: &str, values: &[String]) -> SubgroupView {
        let mut masks: BTreeMap<String, Vec<bool>> = BTreeMap::new();
        for cat in values {
            masks
                .entry(cat.clone())
                .or_insert_with(|| vec![false; values.len()]);
        }
        for (i, cat) in values.iter().enumerate() {
            masks.get_mut(cat).expect("mask was just inserted")[i] = true;
        }
        SubgroupView {
            attribute: attribute.to_string(),
            masks,
        }
    }

    /// Number of records covered by the masks.
    pub fn len(&self) -> usize {
        self.masks.values().next().map_or(0, |m| m.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Dataset {
    /// Validate records and build the container.
    pub fn new(records: Vec<Record>) -> Result<Dataset> {
        if records.is_empty() {
            return Err(Error::Data("dataset has no records".into()));
        }
        let feature_dim = records[0].features.len();
        if feature_dim == 0 {
            return Err(Error::Data("records have no features".into()));
        }
        let attr_names: Vec<&String> = records[0].groups.keys().collect();

        let mut seen_ids = BTreeSet::new();
        let mut bad_labels = Vec::new();
        for (i, r) in records.iter().enumerate() {
            if r.label > 1 {
                bad_labels.push(format!("{} (row {}, label {})", r.id, i, r.label));
            }
            if r.features.len() != feature_dim {
                return Err(Error::Data(format!(
                    "record '{}' has {} features, expected {}",
                    r.id,
                    r.features.len(),
                    feature_dim
                )));
            }
            if let Some(bad) = r.features.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "record '{}' has a non-finite feature value {bad}",
                    r.id
                )));
            }
            if !seen_ids.insert(r.id.as_str()) {
                return Err(Error::Data(format!("duplicate record id '{}'", r.id)));
            }
            if r.groups.keys().ne(attr_names.iter().copied()) {
                return Err(Error::Data(format!(
                    "record '{}' has attributes {:?}, expected {:?}",
                    r.id,
                    r.groups.keys().collect::<Vec<_>>(),
                    attr_names
                )));
            }
            if let Some((attr, _)) = r.groups.iter().find(|(_, v)| v.is_empty()) {
                return Err(Error::Data(format!(
                    "record '{}' has an empty category for attribute '{attr}'",
                    r.id
                )));
            }
        }
        if !bad_labels.is_empty() {
            let shown = bad_labels.iter().take(8).cloned().collect::<Vec<_>>();
            return Err(Error::Data(format!(
                "labels must be 0 or 1; {} offending record(s): {}{}",
                bad_labels.len(),
                shown.join(", "),
                if bad_labels.len() > 8 { ", ..." } else { "" }
            )));
        }

        let mut categories: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for r in &records {
            for (attr, cat) in &r.groups {
                categories
                    .entry(attr.clone())
                    .or_default()
                    .insert(cat.clone());
            }
        }
        let categories = categories
            .into_iter()
            .map(|(a, set)| (a, set.into_iter().collect()))
            .collect();

        Ok(Dataset {
            records,
            feature_dim,
            categories,
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// All attribute names with their observed categories (sorted).
    pub fn attributes(&self) -> &BTreeMap<String, Vec<String>> {
        &self.categories
    }

    /// Attributes with at least two observed categories — the only ones on
    /// which subgroup metrics and group-aware training are meaningful.
    pub fn usable_attributes(&self) -> Vec<&str> {
        self.categories
            .iter()
            .filter(|(_, cats)| cats.len() >= 2)
            .map(|(a, _)| a.as_str())
            .collect()
    }

    /// Sorted categories observed for `attribute`.
    pub fn attribute_categories(&self, attribute: &str) -> Result<&[String]> {
        self.categories
            .get(attribute)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Data(format!("attribute '{attribute}' not present in dataset")))
    }

    /// Record counts per category of `attribute`.
    pub fn category_counts(&self, attribute: &str) -> Result<BTreeMap<String, usize>> {
        self.attribute_categories(attribute)?;
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.groups[attribute].clone()).or_insert(0) += 1;
        }
        Ok(counts)
    }

    /// Membership masks for one attribute.
    pub fn subgroup_view(&self, attribute: &str) -> Result<SubgroupView> {
        let values = self.attribute_values(attribute)?;
        Ok(SubgroupView::from_assignments(attribute, &values))
    }

    /// The category value of `attribute` for each record, in record order.
    pub fn attribute_values(&self, attribute: &str) -> Result<Vec<String>> {
        self.attribute_categories(attribute)?;
        Ok(self
            .records
            .iter()
            .map(|r| r.groups[attribute].clone())
            .collect())
    }

    /// Per-record category codes plus the sorted category list they index.
    pub fn group_codes(&self, attribute: &str) -> Result<(Vec<usize>, Vec<String>)> {
        let cats = self.attribute_categories(attribute)?.to_vec();
        let index: BTreeMap<&str, usize> = cats
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let codes = self
            .records
            .iter()
            .map(|r| index[r.groups[attribute].as_str()])
            .collect();
        Ok((codes, cats))
    }

    /// Dense n-by-d feature matrix in record order.
    pub fn feature_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.len(), self.feature_dim));
        for (i, r) in self.records.iter().enumerate() {
            for (j, v) in r.features.iter().enumerate() {
                m[[i, j]] = *v;
            }
        }
        m
    }

    /// Labels in record order.
    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Equalize category sizes for `attribute` by upsampling smaller
    /// categories with replacement to the largest category's size.
    ///
    /// All original records are retained unchanged; sampled duplicates get
    /// ids suffixed `#dup1`, `#dup2`, ... (numbered per source record) so id
    /// uniqueness survives. Deterministic for a fixed seed.
    pub fn balanced_resample(&self, attribute: &str, seed: u64) -> Result<Dataset> {
        let counts = self.category_counts(attribute)?;
        if counts.len() < 2 {
            return Err(Error::Data(format!(
                "attribute '{attribute}' has a single category; balancing is meaningless"
            )));
        }
        let target = *counts.values().max().expect("counts nonempty");

        let mut out = self.records.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dup_counter: BTreeMap<String, usize> = BTreeMap::new();
        // Sorted category order keeps the draw sequence independent of map
        // iteration details.
        for (cat, &count) in &counts {
            if count == target {
                continue;
            }
            let members: Vec<usize> = self
                .records
                .iter()
                .enumerate()
                .filter(|(_, r)| &r.groups[attribute] == cat)
                .map(|(i, _)| i)
                .collect();
            for _ in 0..target - count {
                let pick = members[rng.random_range(0..members.len())];
                let mut dup = self.records[pick].clone();
                let k = dup_counter.entry(dup.id.clone()).or_insert(0);
                *k += 1;
                dup.id = format!("{}#dup{}", dup.id, k);
                out.push(dup);
            }
        }
        Dataset::new(out)
    }

    /// Deterministic shuffled split into (train, test) with the test side
    /// holding `round(n * test_fraction)` records.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test fraction must lie in (0, 1), got {test_fraction}"
            )));
        }
        let n = self.len();
        let n_test = (n as f64 * test_fraction).round() as usize;
        if n_test == 0 || n_test == n {
            return Err(Error::Data(format!(
                "splitting {n} records at fraction {test_fraction} leaves an empty side"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);

        let mut test_idx: Vec<usize> = order[..n_test].to_vec();
        let mut train_idx: Vec<usize> = order[n_test..].to_vec();
        // Original record order within each side keeps downstream iteration
        // independent of the shuffle's internal layout.
        test_idx.sort_unstable();
        train_idx.sort_unstable();

        let pick = |idx: &[usize]| {
            Dataset::new(idx.iter().map(|&i| self.records[i].clone()).collect())
        };
        Ok((pick(&train_idx)?, pick(&test_idx)?))
    }

    /// Dataset restricted to the given record indices (duplicates allowed by
    /// the caller are rejected by id validation; used for clean subsets).
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(indices.iter().map(|&i| self.records[i].clone()).collect())
    }
}
