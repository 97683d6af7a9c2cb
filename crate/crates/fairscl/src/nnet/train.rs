//! The five training procedures and their shared machinery.
//!
//! Every method trains the same model family under the same optimizer and
//! compute budget, so the only thing a comparison can pick up is the
//! objective:
//!
//! - `erm`: plain binary cross-entropy for the full epoch budget.
//! - `balanced`: the same, on a training set resampled to equal category
//!   sizes.
//! - `adv`: cross-entropy plus an adversarial group head whose gradient is
//!   reversed (scaled by −λ) where it enters the encoder.
//! - `scl`: two phases — label-only contrastive pretraining of the encoder,
//!   then a cross-entropy fine-tune through a freshly attached prediction
//!   head.
//! - `proposed`: the same two phases with group-aware pairing.
//!
//! Two-phase methods get `pretrain_epochs` of phase one plus
//! `finetune_epochs` of phase two; single-phase methods run for the sum, so
//! every method sees the same number of passes over the data. At the phase
//! boundary the optimizer state is reset and the encoder is fingerprinted,
//! so a head swap that accidentally disturbs encoder weights is detectable.
//!
//! All randomness (weight init, batch shuffling, balanced resampling) comes
//! from streams derived from `TrainConfig::seed` by purpose, so two methods
//! trained with the same seed start from identical encoder weights and see
//! identical batch orders where their procedures coincide.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    normalize_rows, normalize_rows_backward, sigmoid, Gradients, ModelState,
};
use crate::contrastive::{build_pairs, contrastive_loss_grad, EmbeddingBatch, LossForm, PairMode, PairSet};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::ScoredSet;
use crate::seeding::{derive, purpose};

/// Floor used only when reporting cross-entropy values; gradients use the
/// exact probabilities, so the clamp never biases a step.
const PROB_FLOOR: f64 = 1e-12;

/// The training procedures this crate compares.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Erm,
    Balanced,
    Adv,
    Scl,
    Proposed,
}

impl Method {
    pub fn all() -> [Method; 5] {
        [
            Method::Erm,
            Method::Balanced,
            Method::Adv,
            Method::Scl,
            Method::Proposed,
        ]
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Erm => "erm",
            Method::Balanced => "balanced",
            Method::Adv => "adv",
            Method::Scl => "scl",
            Method::Proposed => "proposed",
        }
    }

    /// Whether the procedure reads the group attribute at training time.
    pub fn uses_attribute(self) -> bool {
        matches!(self, Method::Balanced | Method::Adv | Method::Proposed)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters shared by every method. Unknown fields in a config file
/// are rejected; omitted fields take these defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Group attribute driving group-aware pairing, balancing, and the
    /// adversary. Ignored by `erm` and `scl`.
    pub attribute: String,
    /// Phase-one epochs for the two-phase methods; part of the single-phase
    /// budget otherwise.
    pub pretrain_epochs: usize,
    /// Phase-two epochs (and the rest of the single-phase budget).
    pub finetune_epochs: usize,
    pub learning_rate: f64,
    /// Similarity temperature for the contrastive losses.
    pub temperature: f64,
    pub batch_size: usize,
    /// Encoder hidden widths, in order.
    pub hidden: Vec<usize>,
    /// Contrastive embedding width.
    pub embed_dim: usize,
    /// λ: how strongly the reversed adversary gradient hits the encoder.
    pub adversary_weight: f64,
    pub loss_form: LossForm,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            attribute: String::new(),
            pretrain_epochs: 10,
            finetune_epochs: 1,
            learning_rate: 1e-4,
            temperature: 0.05,
            batch_size: 32,
            hidden: vec![64, 64],
            embed_dim: 128,
            adversary_weight: 1.0,
            loss_form: LossForm::LogRatio,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self, data: &Dataset, needs_attribute: bool) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::Config(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        if !self.adversary_weight.is_finite() {
            return Err(Error::Config("adversary_weight must be finite".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) || self.embed_dim == 0 {
            return Err(Error::Config(
                "hidden widths and embed_dim must all be at least 1".into(),
            ));
        }
        if needs_attribute {
            let cats = data.attribute_categories(&self.attribute).map_err(|_| {
                Error::Config(format!(
                    "attribute '{}' is not in the dataset; available: {:?}",
                    self.attribute,
                    data.usable_attributes()
                ))
            })?;
            if cats.len() < 2 {
                return Err(Error::Config(format!(
                    "attribute '{}' has {} category; need at least 2",
                    self.attribute,
                    cats.len()
                )));
            }
        }
        Ok(())
    }
}

/// What happened during one training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean contrastive loss per usable anchor, one entry per phase-one
    /// epoch.
    pub phase1_loss: Vec<f64>,
    /// Mean cross-entropy per record, one entry per supervised epoch.
    pub phase2_loss: Vec<f64>,
    /// Anchors dropped for lack of a positive or negative, summed over all
    /// phase-one batches.
    pub dropped_anchors: usize,
    /// Phase-one batches skipped entirely because no anchor was usable.
    pub skipped_batches: usize,
    /// Phase-one batches that lost at least half their anchors.
    pub high_drop_batches: usize,
    /// Encoder fingerprint taken at the head swap; the encoder entering
    /// phase two must hash to exactly this value.
    pub encoder_hash_after_phase1: Option<u64>,
    /// Training-set size after balanced resampling, where it applies.
    pub resampled_n: Option<usize>,
}

/// A trained model together with its training log.
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: ModelState,
    pub log: TrainLog,
}

/// Train `data` with one of the five procedures.
pub fn train(method: Method, data: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    match method {
        Method::Erm => train_erm(data, cfg),
        Method::Balanced => train_balanced(data, cfg),
        Method::Adv => train_adv(data, cfg),
        Method::Scl => train_scl(data, cfg),
        Method::Proposed => train_proposed(data, cfg),
    }
}

pub fn train_erm(data: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate(data, false)?;
    supervised_core(data, cfg, false)
}

pub fn train_balanced(data: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate(data, true)?;
    let resampled = data.balanced_resample(&cfg.attribute, derive(cfg.seed, purpose::BALANCE))?;
    let mut trained = supervised_core(&resampled, cfg, false)?;
    trained.log.resampled_n = Some(resampled.len());
    Ok(trained)
}

pub fn train_adv(data: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate(data, true)?;
    supervised_core(data, cfg, true)
}

pub fn train_scl(data: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate(data, false)?;
    two_phase(data, cfg, PairMode::LabelOnly)
}

pub fn train_proposed(data: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate(data, true)?;
    two_phase(data, cfg, PairMode::GroupAware)
}

/// Score a dataset with a trained model, carrying every group attribute
/// along so any of them can be audited downstream.
pub fn predict(model: &ModelState, data: &Dataset) -> Result<ScoredSet> {
    if data.feature_dim() != model.feature_dim() {
        return Err(Error::Contract(format!(
            "model expects {} features, dataset has {}",
            model.feature_dim(),
            data.feature_dim()
        )));
    }
    let x = data.feature_matrix();
    let probs = model.predict_probs(&x.view());
    let mut groups = BTreeMap::new();
    for attribute in data.attributes().keys() {
        groups.insert(attribute.clone(), data.attribute_values(attribute)?);
    }
    ScoredSet::new(probs.to_vec(), data.labels(), groups)
}

/// Uniformly shuffled index batches; the trailing partial batch is kept.
fn shuffled_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Batches interleaved so every (label, category) stratum is spread evenly:
/// the k-th of a stratum's shuffled members gets sort key (k + ½)/|stratum|,
/// which places proportional shares of each stratum in every batch. Pair
/// construction then finds positives and negatives in nearly every batch
/// instead of depending on shuffle luck.
fn stratified_batches(
    labels: &[u8],
    codes: &[usize],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut strata: BTreeMap<(u8, usize), Vec<usize>> = BTreeMap::new();
    for i in 0..labels.len() {
        strata.entry((labels[i], codes[i])).or_default().push(i);
    }
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(labels.len());
    for (rank, members) in strata.values_mut().enumerate() {
        members.shuffle(rng);
        let len = members.len() as f64;
        for (k, &idx) in members.iter().enumerate() {
            keyed.push(((k as f64 + 0.5) / len, rank, idx));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    keyed
        .chunks(batch_size)
        .map(|chunk| chunk.iter().map(|&(_, _, idx)| idx).collect())
        .collect()
}

/// Cross-entropy loss and gradients for one batch, optionally with the
/// reversed adversary. `adversary` carries the batch group codes and λ; a
/// zero λ skips the group path entirely, making the step identical to plain
/// cross-entropy down to the last bit.
pub(crate) fn supervised_batch_gradients(
    model: &ModelState,
    xb: &Array2<f64>,
    yb: &[u8],
    adversary: Option<(&[usize], f64)>,
) -> Result<(f64, Gradients)> {
    let adversary = adversary.filter(|&(_, lambda)| lambda != 0.0);
    let cache = model.encoder_forward(&xb.view());
    let h = cache.output().view();
    let n = yb.len() as f64;

    let logits = model.prediction_head.forward(&h);
    let mut bce = 0.0;
    let mut d_logit = Array2::zeros((yb.len(), 1));
    for i in 0..yb.len() {
        let p = sigmoid(logits[[i, 0]]);
        let y = f64::from(yb[i]);
        let clamped = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        bce -= y * clamped.ln() + (1.0 - y) * (1.0 - clamped).ln();
        d_logit[[i, 0]] = (p - y) / n;
    }
    bce /= n;
    let (pred_grad, mut dh) = model.prediction_head.backward(&h, &d_logit.view());

    let mut group_grad = None;
    if let Some((gb, lambda)) = adversary {
        let head = model.group_head.as_ref().ok_or_else(|| {
            Error::Contract("adversarial gradients need a model with a group head".into())
        })?;
        let g_logits = head.forward(&h);
        let mut d_g = Array2::zeros(g_logits.raw_dim());
        for i in 0..yb.len() {
            let row = g_logits.row(i);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
            let denom: f64 = exps.iter().sum();
            for (g, &e) in exps.iter().enumerate() {
                let p = e / denom;
                let target = if gb[i] == g { 1.0 } else { 0.0 };
                d_g[[i, g]] = (p - target) / n;
            }
        }
        let (grad, dh_group) = head.backward(&h, &d_g.view());
        // Reversal: the head descends its own loss, the encoder ascends it.
        dh.scaled_add(-lambda, &dh_group);
        group_grad = Some(grad);
    }

    let encoder = model.encoder_backward(&cache, dh);
    Ok((
        bce,
        Gradients {
            encoder,
            prediction: Some(pred_grad),
            group: group_grad,
            ..Gradients::default()
        },
    ))
}

/// Contrastive loss and gradients for one batch with an already-built pair
/// set.
fn contrastive_batch_gradients(
    model: &ModelState,
    xb: &Array2<f64>,
    pairs: &PairSet,
    temperature: f64,
    form: LossForm,
) -> Result<(f64, Gradients)> {
    let cache = model.encoder_forward(&xb.view());
    let h = cache.output().view();
    let e = model.contrastive_head.forward(&h);
    let (z, norms) = normalize_rows(e)?;
    let batch = EmbeddingBatch::new(z)?;
    let (loss, gz) = contrastive_loss_grad(&batch, pairs, temperature, form)?;
    let ge = normalize_rows_backward(&gz, &batch.matrix(), &norms);
    let (head_grad, dh) = model.contrastive_head.backward(&h, &ge.view());
    let encoder = model.encoder_backward(&cache, dh);
    Ok((
        loss,
        Gradients {
            encoder,
            contrastive: Some(head_grad),
            ..Gradients::default()
        },
    ))
}

/// Single-phase supervised training (`erm`, `balanced` after resampling,
/// `adv`), for the full epoch budget.
fn supervised_core(data: &Dataset, cfg: &TrainConfig, adversary: bool) -> Result<Trained> {
    let x = data.feature_matrix();
    let y = data.labels();
    let (codes, n_groups) = if adversary {
        let (codes, categories) = data.group_codes(&cfg.attribute)?;
        (codes, Some(categories.len()))
    } else {
        (Vec::new(), None)
    };
    let mut model = ModelState::new(
        data.feature_dim(),
        &cfg.hidden,
        cfg.embed_dim,
        n_groups,
        derive(cfg.seed, purpose::INIT),
    )?;
    let mut shuffle = ChaCha8Rng::seed_from_u64(derive(cfg.seed, purpose::SHUFFLE));
    let mut log = TrainLog::default();

    let epochs = cfg.pretrain_epochs + cfg.finetune_epochs;
    for _ in 0..epochs {
        let batches = shuffled_batches(data.len(), cfg.batch_size, &mut shuffle);
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in &batches {
            let xb = x.select(Axis(0), batch);
            let yb: Vec<u8> = batch.iter().map(|&i| y[i]).collect();
            let gb: Vec<usize>;
            let adv = if adversary {
                gb = batch.iter().map(|&i| codes[i]).collect();
                Some((gb.as_slice(), cfg.adversary_weight))
            } else {
                None
            };
            let (loss, grads) = supervised_batch_gradients(&model, &xb, &yb, adv)?;
            model.adam_step(&grads, cfg.learning_rate)?;
            total += loss * yb.len() as f64;
            count += yb.len();
        }
        log.phase2_loss.push(total / count as f64);
    }
    Ok(Trained { model, log })
}

/// Contrastive pretraining followed by a supervised fine-tune through a
/// fresh head (`scl` with label-only pairs, `proposed` with group-aware
/// pairs).
fn two_phase(data: &Dataset, cfg: &TrainConfig, mode: PairMode) -> Result<Trained> {
    let x = data.feature_matrix();
    let y = data.labels();
    let codes = match mode {
        PairMode::GroupAware => data.group_codes(&cfg.attribute)?.0,
        // Label-only pairing never reads categories; stratify by label alone.
        PairMode::LabelOnly => vec![0; data.len()],
    };
    let mut model = ModelState::new(
        data.feature_dim(),
        &cfg.hidden,
        cfg.embed_dim,
        None,
        derive(cfg.seed, purpose::INIT),
    )?;
    let mut shuffle = ChaCha8Rng::seed_from_u64(derive(cfg.seed, purpose::SHUFFLE));
    let mut log = TrainLog::default();

    for _ in 0..cfg.pretrain_epochs {
        let batches = stratified_batches(&y, &codes, cfg.batch_size, &mut shuffle);
        let mut loss_sum = 0.0;
        let mut anchors = 0usize;
        let mut contributing = 0usize;
        for batch in &batches {
            let yb: Vec<u8> = batch.iter().map(|&i| y[i]).collect();
            let gb: Vec<usize> = batch.iter().map(|&i| codes[i]).collect();
            let pairs = build_pairs(&yb, &gb, mode)?;
            log.dropped_anchors += pairs.dropped;
            if pairs.dropped * 2 >= pairs.batch_size {
                log.high_drop_batches += 1;
            }
            if pairs.pairs.is_empty() {
                log.skipped_batches += 1;
                continue;
            }
            let xb = x.select(Axis(0), batch);
            let (loss, grads) =
                contrastive_batch_gradients(&model, &xb, &pairs, cfg.temperature, cfg.loss_form)?;
            model.adam_step(&grads, cfg.learning_rate)?;
            loss_sum += loss;
            anchors += pairs.pairs.len();
            contributing += 1;
        }
        if contributing == 0 {
            return Err(Error::Training(format!(
                "contrastive pretraining is infeasible: no batch of size {} produced a \
                 usable anchor under the pairing rule",
                cfg.batch_size
            )));
        }
        log.phase1_loss.push(loss_sum / anchors as f64);
    }

    // Head swap: fingerprint the encoder, then hand it to a fresh optimizer
    // and the (still untouched, zero) prediction head.
    log.encoder_hash_after_phase1 = Some(model.encoder_hash());
    model.reset_optimizer();

    for _ in 0..cfg.finetune_epochs {
        let batches = shuffled_batches(data.len(), cfg.batch_size, &mut shuffle);
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in &batches {
            let xb = x.select(Axis(0), batch);
            let yb: Vec<u8> = batch.iter().map(|&i| y[i]).collect();
            let (loss, grads) = supervised_batch_gradients(&model, &xb, &yb, None)?;
            model.adam_step(&grads, cfg.learning_rate)?;
            total += loss * yb.len() as f64;
            count += yb.len();
        }
        log.phase2_loss.push(total / count as f64);
    }
    Ok(Trained { model, log })
}
