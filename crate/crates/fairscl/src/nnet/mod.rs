//! Model state, optimizer, and differentiation for the small feedforward
//! networks the trainers operate on.
//!
//! A model is a ReLU encoder shared by up to three linear heads: a
//! contrastive head whose output is row-normalized onto the unit sphere, a
//! single-logit prediction head read through a sigmoid, and an optional
//! group head used by the adversarial baseline. Forward passes cache the
//! post-activation outputs so the exact gradient of any head loss can be
//! pushed back through the encoder by hand.
//!
//! Initialization draws encoder and contrastive-head weights uniformly from
//! ±1/√fan_in in a fixed order from one seeded stream. The prediction and
//! group heads start at exactly zero and consume no draws: an untrained
//! model scores every record 0.5, and enabling or disabling a head never
//! shifts the stream another component sees, so training runs that differ
//! only in a disabled component stay bit-identical.
//!
//! The optimizer is Adam with bias correction (β₁ = 0.9, β₂ = 0.999,
//! ε = 1e-8). Moments live next to the weights in [`ModelState`] so a
//! checkpoint restores the optimizer mid-run; [`ModelState::reset_optimizer`]
//! zeroes them at phase boundaries where a fresh optimizer is wanted.

pub mod checkpoint;
mod train;

pub use train::{
    predict, train, train_adv, train_balanced, train_erm, train_proposed, train_scl, Method,
    TrainConfig, TrainLog, Trained,
};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seeding::fnv1a_f64;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// One affine map, stored as `w` (out×in) and `b` (out).
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct DenseLayer {
    pub(crate) w: Array2<f64>,
    pub(crate) b: Array1<f64>,
}

impl DenseLayer {
    fn zeros(out: usize, inp: usize) -> DenseLayer {
        DenseLayer {
            w: Array2::zeros((out, inp)),
            b: Array1::zeros(out),
        }
    }

    /// Weights uniform on ±1/√fan_in, drawn row-major; biases zero.
    fn uniform(out: usize, inp: usize, rng: &mut ChaCha8Rng) -> DenseLayer {
        let scale = 1.0 / (inp as f64).sqrt();
        let mut w = Array2::zeros((out, inp));
        for i in 0..out {
            for j in 0..inp {
                w[[i, j]] = (2.0 * rng.random::<f64>() - 1.0) * scale;
            }
        }
        DenseLayer {
            w,
            b: Array1::zeros(out),
        }
    }

    pub(crate) fn forward(&self, x: &ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    /// Parameter gradients and the input gradient, given the layer input and
    /// the gradient at the layer output.
    pub(crate) fn backward(
        &self,
        input: &ArrayView2<'_, f64>,
        dout: &ArrayView2<'_, f64>,
    ) -> (LayerGrad, Array2<f64>) {
        let grad = LayerGrad {
            w: dout.t().dot(input),
            b: dout.sum_axis(Axis(0)),
        };
        (grad, dout.dot(&self.w))
    }
}

/// Gradient for one layer, same shapes as the layer itself.
#[derive(Clone, Debug)]
pub(crate) struct LayerGrad {
    pub(crate) w: Array2<f64>,
    pub(crate) b: Array1<f64>,
}

impl LayerGrad {
    #[cfg(test)]
    fn zeros_like(layer: &DenseLayer) -> LayerGrad {
        LayerGrad {
            w: Array2::zeros(layer.w.raw_dim()),
            b: Array1::zeros(layer.b.raw_dim()),
        }
    }

    fn is_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite()) && self.b.iter().all(|v| v.is_finite())
    }
}

/// Gradients for whichever components a step trains; absent components are
/// left untouched by [`ModelState::adam_step`].
#[derive(Clone, Debug, Default)]
pub(crate) struct Gradients {
    pub(crate) encoder: Vec<LayerGrad>,
    pub(crate) contrastive: Option<LayerGrad>,
    pub(crate) prediction: Option<LayerGrad>,
    pub(crate) group: Option<LayerGrad>,
}

/// First and second Adam moments for one layer.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct AdamSlot {
    mw: Array2<f64>,
    vw: Array2<f64>,
    mb: Array1<f64>,
    vb: Array1<f64>,
}

impl AdamSlot {
    fn zeros_like(layer: &DenseLayer) -> AdamSlot {
        AdamSlot {
            mw: Array2::zeros(layer.w.raw_dim()),
            vw: Array2::zeros(layer.w.raw_dim()),
            mb: Array1::zeros(layer.b.raw_dim()),
            vb: Array1::zeros(layer.b.raw_dim()),
        }
    }

    fn reset(&mut self) {
        self.mw.fill(0.0);
        self.vw.fill(0.0);
        self.mb.fill(0.0);
        self.vb.fill(0.0);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct AdamState {
    encoder: Vec<AdamSlot>,
    contrastive: AdamSlot,
    prediction: AdamSlot,
    group: Option<AdamSlot>,
    step: u64,
}

fn adam_update<D: ndarray::Dimension>(
    theta: &mut ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    g: &ndarray::Array<f64, D>,
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    Zip::from(theta).and(m).and(v).and(g).for_each(|t, m, v, &g| {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *t -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    });
}

/// Encoder post-activations: `activations[0]` is the batch input and
/// `activations[l + 1]` the ReLU output of encoder layer `l`.
pub(crate) struct EncoderCache {
    pub(crate) activations: Vec<Array2<f64>>,
}

impl EncoderCache {
    pub(crate) fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds the input")
    }
}

/// All weights of one model together with its optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub(crate) feature_dim: usize,
    pub(crate) encoder: Vec<DenseLayer>,
    pub(crate) contrastive_head: DenseLayer,
    pub(crate) prediction_head: DenseLayer,
    pub(crate) group_head: Option<DenseLayer>,
    pub(crate) adam: AdamState,
}

impl ModelState {
    /// Fresh model. `seed` feeds the one stream the uniform draws come
    /// from; pass a group count only when an adversarial group head is
    /// wanted.
    pub fn new(
        feature_dim: usize,
        hidden: &[usize],
        embed_dim: usize,
        n_groups: Option<usize>,
        seed: u64,
    ) -> Result<ModelState> {
        if feature_dim == 0 || embed_dim == 0 {
            return Err(Error::Config(
                "feature and embedding dimensions must be at least 1".into(),
            ));
        }
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::Config(
                "the encoder needs at least one hidden layer, all of width ≥ 1".into(),
            ));
        }
        if let Some(g) = n_groups {
            if g < 2 {
                return Err(Error::Config(format!(
                    "a group head needs at least 2 categories, got {g}"
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut encoder = Vec::with_capacity(hidden.len());
        let mut inp = feature_dim;
        for &out in hidden {
            encoder.push(DenseLayer::uniform(out, inp, &mut rng));
            inp = out;
        }
        let contrastive_head = DenseLayer::uniform(embed_dim, inp, &mut rng);
        // Zero heads: no draws, and every untrained score is exactly 0.5.
        let prediction_head = DenseLayer::zeros(1, inp);
        let group_head = n_groups.map(|g| DenseLayer::zeros(g, inp));

        let adam = AdamState {
            encoder: encoder.iter().map(AdamSlot::zeros_like).collect(),
            contrastive: AdamSlot::zeros_like(&contrastive_head),
            prediction: AdamSlot::zeros_like(&prediction_head),
            group: group_head.as_ref().map(AdamSlot::zeros_like),
            step: 0,
        };
        Ok(ModelState {
            feature_dim,
            encoder,
            contrastive_head,
            prediction_head,
            group_head,
            adam,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Hash of the encoder weights alone (bit-exact, head-independent), for
    /// verifying that a head swap left the encoder untouched.
    pub fn encoder_hash(&self) -> u64 {
        let mut values = Vec::new();
        for layer in &self.encoder {
            values.extend(layer.w.iter().copied());
            values.extend(layer.b.iter().copied());
        }
        fnv1a_f64(&values)
    }

    pub(crate) fn encoder_forward(&self, x: &ArrayView2<'_, f64>) -> EncoderCache {
        let mut activations = vec![x.to_owned()];
        for layer in &self.encoder {
            let pre = layer.forward(&activations.last().unwrap().view());
            activations.push(pre.mapv(|v| v.max(0.0)));
        }
        EncoderCache { activations }
    }

    /// Encoder gradients from the gradient at the encoder output, using the
    /// cached post-activations as the ReLU mask.
    pub(crate) fn encoder_backward(
        &self,
        cache: &EncoderCache,
        d_output: Array2<f64>,
    ) -> Vec<LayerGrad> {
        let mut d_post = d_output;
        let mut grads = Vec::with_capacity(self.encoder.len());
        for l in (0..self.encoder.len()).rev() {
            let post = &cache.activations[l + 1];
            let d_pre = Zip::from(&d_post)
                .and(post)
                .map_collect(|&g, &p| if p > 0.0 { g } else { 0.0 });
            let (grad, d_input) = self.encoder[l]
                .backward(&cache.activations[l].view(), &d_pre.view());
            grads.push(grad);
            d_post = d_input;
        }
        grads.reverse();
        grads
    }

    /// Unit-norm contrastive embeddings for a feature matrix.
    pub fn embed(&self, x: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let cache = self.encoder_forward(x);
        let e = self.contrastive_head.forward(&cache.output().view());
        Ok(normalize_rows(e)?.0)
    }

    /// Sigmoid scores from the prediction head.
    pub fn predict_probs(&self, x: &ArrayView2<'_, f64>) -> Array1<f64> {
        let cache = self.encoder_forward(x);
        let logits = self.prediction_head.forward(&cache.output().view());
        logits.column(0).mapv(sigmoid)
    }

    /// Softmax category probabilities from the adversarial group head, in
    /// the category-code order of the training attribute. Only models built
    /// with a group head have one.
    pub fn predict_group_probs(&self, x: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let head = self.group_head.as_ref().ok_or_else(|| {
            Error::Contract("this model was trained without a group head".into())
        })?;
        let cache = self.encoder_forward(x);
        let logits = head.forward(&cache.output().view());
        let mut probs = logits;
        for mut row in probs.rows_mut() {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - m).exp());
            let denom = row.sum();
            row.mapv_inplace(|v| v / denom);
        }
        Ok(probs)
    }

    /// One bias-corrected Adam step over every component with a gradient.
    /// Gradients are validated (finite, matching shapes) before any weight
    /// moves, so a failed step leaves the model unchanged.
    pub(crate) fn adam_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.encoder.len() != self.encoder.len() {
            return Err(Error::Contract(format!(
                "gradient has {} encoder layers, model has {}",
                grads.encoder.len(),
                self.encoder.len()
            )));
        }
        let check = |name: String, grad: &LayerGrad, layer: &DenseLayer| -> Result<()> {
            if grad.w.raw_dim() != layer.w.raw_dim() || grad.b.raw_dim() != layer.b.raw_dim() {
                return Err(Error::Contract(format!("gradient shape mismatch in {name}")));
            }
            if !grad.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite gradient in {name}; the loss diverged"
                )));
            }
            Ok(())
        };
        for (l, grad) in grads.encoder.iter().enumerate() {
            check(format!("encoder layer {l}"), grad, &self.encoder[l])?;
        }
        if let Some(g) = &grads.contrastive {
            check("contrastive head".into(), g, &self.contrastive_head)?;
        }
        if let Some(g) = &grads.prediction {
            check("prediction head".into(), g, &self.prediction_head)?;
        }
        if let Some(g) = &grads.group {
            let head = self.group_head.as_ref().ok_or_else(|| {
                Error::Contract("group gradient supplied but the model has no group head".into())
            })?;
            check("group head".into(), g, head)?;
        }

        self.adam.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.adam.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.adam.step as i32);
        for (l, grad) in grads.encoder.iter().enumerate() {
            let layer = &mut self.encoder[l];
            let slot = &mut self.adam.encoder[l];
            adam_update(&mut layer.w, &mut slot.mw, &mut slot.vw, &grad.w, lr, bc1, bc2);
            adam_update(&mut layer.b, &mut slot.mb, &mut slot.vb, &grad.b, lr, bc1, bc2);
        }
        if let Some(g) = &grads.contrastive {
            let (layer, slot) = (&mut self.contrastive_head, &mut self.adam.contrastive);
            adam_update(&mut layer.w, &mut slot.mw, &mut slot.vw, &g.w, lr, bc1, bc2);
            adam_update(&mut layer.b, &mut slot.mb, &mut slot.vb, &g.b, lr, bc1, bc2);
        }
        if let Some(g) = &grads.prediction {
            let (layer, slot) = (&mut self.prediction_head, &mut self.adam.prediction);
            adam_update(&mut layer.w, &mut slot.mw, &mut slot.vw, &g.w, lr, bc1, bc2);
            adam_update(&mut layer.b, &mut slot.mb, &mut slot.vb, &g.b, lr, bc1, bc2);
        }
        if let Some(g) = &grads.group {
            let layer = self.group_head.as_mut().unwrap();
            let slot = self.adam.group.as_mut().unwrap();
            adam_update(&mut layer.w, &mut slot.mw, &mut slot.vw, &g.w, lr, bc1, bc2);
            adam_update(&mut layer.b, &mut slot.mb, &mut slot.vb, &g.b, lr, bc1, bc2);
        }
        Ok(())
    }

    /// Zero all moments and the step counter, as at a phase boundary.
    pub fn reset_optimizer(&mut self) {
        for slot in &mut self.adam.encoder {
            slot.reset();
        }
        self.adam.contrastive.reset();
        self.adam.prediction.reset();
        if let Some(slot) = &mut self.adam.group {
            slot.reset();
        }
        self.adam.step = 0;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-normalize onto the unit sphere, returning the norms for the backward
/// pass. A collapsed (near-zero) row is a training failure, not a value.
pub(crate) fn normalize_rows(e: Array2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let mut z = e;
    let mut norms = Vec::with_capacity(z.nrows());
    for (i, mut row) in z.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::Training(format!(
                "embedding row {i} collapsed to norm {norm}; cannot normalize"
            )));
        }
        row /= norm;
        norms.push(norm);
    }
    Ok((z, norms))
}

/// Gradient through row normalization: with `z = e/‖e‖`,
/// `∂L/∂e = (∂L/∂z − (∂L/∂z · z) z)/‖e‖` row by row.
pub(crate) fn normalize_rows_backward(
    gz: &Array2<f64>,
    z: &ArrayView2<f64>,
    norms: &[f64],
) -> Array2<f64> {
    let mut ge = gz.clone();
    for i in 0..gz.nrows() {
        let radial = gz.row(i).dot(&z.row(i));
        let mut row = ge.row_mut(i);
        row.scaled_add(-radial, &z.row(i));
        row /= norms[i];
    }
    ge
}
