//! Supervised contrastive objectives over embedding batches.
//!
//! Pair construction is separated from the loss. [`build_pairs`] scans a
//! batch and records, for every usable anchor, which rows act as positives
//! and which as negatives under the selected [`PairMode`]; the loss and its
//! gradient then evaluate the resulting [`PairSet`] against an
//! [`EmbeddingBatch`] of row embeddings.
//!
//! Two pairing rules are supported. [`PairMode::LabelOnly`] is plain
//! supervised contrastive pairing: positives share the anchor's label,
//! negatives carry the other one, and group annotations are ignored. Under
//! [`PairMode::GroupAware`] a positive must share the label while coming
//! from a *different* category, and a negative must carry the other label
//! within the *same* category — pulling same-label records together across
//! categories while pushing apart the pairs a category shortcut would
//! conflate. Anchors left without at least one positive and one negative
//! are dropped and counted on the pair set.
//!
//! Similarities are dot products scaled by a temperature, and the
//! denominator of each anchor's ratio runs over its negatives only. Both
//! loss forms are evaluated with a max-shift so large similarities cannot
//! overflow the exponentials.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rule deciding which batch rows pair with an anchor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairMode {
    /// Positives share the anchor's label but come from a different
    /// category; negatives carry the other label within the anchor's own
    /// category.
    GroupAware,
    /// Positives share the anchor's label, negatives differ; categories are
    /// ignored.
    LabelOnly,
}

/// Algebraic form of the per-anchor objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    /// Mean over positives of `-log(exp(s⁺)/Σ exp(s⁻))`: log-sum-exp over
    /// the negatives minus the mean positive similarity.
    #[default]
    LogRatio,
    /// Mean over positives of `-exp(s⁺)/Σ exp(s⁻)`, keeping the ratio on
    /// the probability scale instead of the log scale.
    RatioSum,
}

/// One anchor's pairing: indices into the batch it was built from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairIndex {
    pub anchor: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// All usable anchors of a batch, plus bookkeeping for the ones that were
/// not.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSet {
    pub pairs: Vec<PairIndex>,
    /// Anchors excluded because they had no positive or no negative.
    pub dropped: usize,
    /// Number of rows in the batch this set was built for.
    pub batch_size: usize,
}

/// Build the pair set for a batch of labels and category assignments.
///
/// Every row is considered as an anchor; rows that end up with an empty
/// positive or negative list are dropped and only counted. Index lists are
/// in increasing row order.
pub fn build_pairs<G: PartialEq>(labels: &[u8], groups: &[G], mode: PairMode) -> Result<PairSet> {
    if labels.len() != groups.len() {
        return Err(Error::Contract(format!(
            "got {} labels but {} category assignments",
            labels.len(),
            groups.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Data(format!("labels must be 0 or 1, got {bad}")));
    }
    let n = labels.len();
    let mut pairs = Vec::new();
    let mut dropped = 0;
    for i in 0..n {
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for j in 0..n {
            if j == i {
                continue;
            }
            let same_label = labels[j] == labels[i];
            let same_group = groups[j] == groups[i];
            let (is_positive, is_negative) = match mode {
                PairMode::GroupAware => (same_label && !same_group, !same_label && same_group),
                PairMode::LabelOnly => (same_label, !same_label),
            };
            if is_positive {
                positives.push(j);
            } else if is_negative {
                negatives.push(j);
            }
        }
        if positives.is_empty() || negatives.is_empty() {
            dropped += 1;
        } else {
            pairs.push(PairIndex {
                anchor: i,
                positives,
                negatives,
            });
        }
    }
    Ok(PairSet {
        pairs,
        dropped,
        batch_size: n,
    })
}

/// A batch of row embeddings.
///
/// [`EmbeddingBatch::new`] insists on unit-norm rows, which is what the
/// encoder produces; [`EmbeddingBatch::from_raw`] accepts arbitrary finite
/// rows (the losses are well defined either way).
#[derive(Clone, Debug)]
pub struct EmbeddingBatch {
    z: Array2<f64>,
}

impl EmbeddingBatch {
    pub fn new(z: Array2<f64>) -> Result<Self> {
        let batch = Self::from_raw(z)?;
        for (i, row) in batch.z.rows().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Contract(format!(
                    "embedding row {i} has norm {norm}; rows must be unit length"
                )));
            }
        }
        Ok(batch)
    }

    /// Wrap rows without the unit-norm check.
    pub fn from_raw(z: Array2<f64>) -> Result<Self> {
        if z.nrows() == 0 || z.ncols() == 0 {
            return Err(Error::Contract(
                "embedding batch must have at least one row and one column".into(),
            ));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(
                "embedding batch contains a non-finite value".into(),
            ));
        }
        Ok(Self { z })
    }

    pub fn len(&self) -> usize {
        self.z.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.z.view()
    }
}

fn validate(z: &EmbeddingBatch, pairs: &PairSet, temperature: f64) -> Result<()> {
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::Config(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    if pairs.batch_size != z.len() {
        return Err(Error::Contract(format!(
            "pair set was built for {} rows but the embedding batch has {}",
            pairs.batch_size,
            z.len()
        )));
    }
    for pair in &pairs.pairs {
        if pair.positives.is_empty() {
            return Err(Error::Contract(format!(
                "anchor {} has no positives",
                pair.anchor
            )));
        }
        if pair.negatives.is_empty() {
            return Err(Error::Contract(format!(
                "anchor {} has no negatives",
                pair.anchor
            )));
        }
        if let Some(j) = std::iter::once(pair.anchor)
            .chain(pair.positives.iter().copied())
            .chain(pair.negatives.iter().copied())
            .find(|&j| j >= z.len())
        {
            return Err(Error::Contract(format!(
                "pair index {j} is out of range for a batch of {} rows",
                z.len()
            )));
        }
    }
    Ok(())
}

/// One anchor's loss together with the coefficients of its similarity
/// derivatives: `∂L/∂s⁺ₖ = cp[k]`, `∂L/∂s⁻ₖ = cn[k]`.
fn anchor_terms(sp: &[f64], sn: &[f64], form: LossForm) -> (f64, Vec<f64>, Vec<f64>) {
    let inv_p = 1.0 / sp.len() as f64;
    match form {
        LossForm::LogRatio => {
            let m = sn.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = sn.iter().map(|&s| (s - m).exp()).collect();
            let denom: f64 = exps.iter().sum();
            let lse = m + denom.ln();
            let mean_sp = sp.iter().sum::<f64>() * inv_p;
            let cp = vec![-inv_p; sp.len()];
            let cn = exps.iter().map(|&e| e / denom).collect();
            (lse - mean_sp, cp, cn)
        }
        LossForm::RatioSum => {
            // The shift must cover the positives too: the ratio itself can be
            // huge, and exp(s⁺ - m) / Σ exp(s⁻ - m) reproduces it exactly.
            let m = sp
                .iter()
                .chain(sn)
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let en: Vec<f64> = sn.iter().map(|&s| (s - m).exp()).collect();
            let denom: f64 = en.iter().sum();
            let ratios: Vec<f64> = sp.iter().map(|&s| (s - m).exp() / denom).collect();
            let ratio_sum: f64 = ratios.iter().sum();
            let cp = ratios.iter().map(|&r| -r * inv_p).collect();
            let cn = en.iter().map(|&e| e / denom * ratio_sum * inv_p).collect();
            (-ratio_sum * inv_p, cp, cn)
        }
    }
}

fn similarities(x: &ArrayView2<'_, f64>, pair: &PairIndex, temperature: f64) -> (Vec<f64>, Vec<f64>) {
    let zi = x.row(pair.anchor);
    let sp = pair
        .positives
        .iter()
        .map(|&p| zi.dot(&x.row(p)) / temperature)
        .collect();
    let sn = pair
        .negatives
        .iter()
        .map(|&q| zi.dot(&x.row(q)) / temperature)
        .collect();
    (sp, sn)
}

/// Total loss over all anchors in the pair set (an empty set contributes
/// zero).
pub fn contrastive_loss(
    z: &EmbeddingBatch,
    pairs: &PairSet,
    temperature: f64,
    form: LossForm,
) -> Result<f64> {
    validate(z, pairs, temperature)?;
    let x = z.matrix();
    let mut loss = 0.0;
    for pair in &pairs.pairs {
        let (sp, sn) = similarities(&x, pair, temperature);
        loss += anchor_terms(&sp, &sn, form).0;
    }
    Ok(loss)
}

/// Loss plus its exact gradient with respect to every embedding row. Rows
/// that appear in no pair receive a zero gradient.
pub fn contrastive_loss_grad(
    z: &EmbeddingBatch,
    pairs: &PairSet,
    temperature: f64,
    form: LossForm,
) -> Result<(f64, Array2<f64>)> {
    validate(z, pairs, temperature)?;
    let x = z.matrix();
    let mut grad = Array2::zeros(x.raw_dim());
    let mut loss = 0.0;
    let inv_t = 1.0 / temperature;
    for pair in &pairs.pairs {
        let (sp, sn) = similarities(&x, pair, temperature);
        let (term, cp, cn) = anchor_terms(&sp, &sn, form);
        loss += term;
        let zi = x.row(pair.anchor);
        for (&p, &c) in pair.positives.iter().zip(&cp) {
            let scaled = c * inv_t;
            grad.row_mut(pair.anchor).scaled_add(scaled, &x.row(p));
            grad.row_mut(p).scaled_add(scaled, &zi);
        }
        for (&q, &c) in pair.negatives.iter().zip(&cn) {
            let scaled = c * inv_t;
            grad.row_mut(pair.anchor).scaled_add(scaled, &x.row(q));
            grad.row_mut(q).scaled_add(scaled, &zi);
        }
    }
    Ok((loss, grad))
}
