//! Cross-entropy training of the toy CMs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::ParamGrads;
use super::{CmArchitecture, DetectorError, DifferentiableScorer, ToyCmModel};
use crate::dsp::Waveform;
use crate::metrics::compute_eer;
use crate::optim::{AdamHyper, AdamMoments};

/// Which built-in CM to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmVariant {
    A,
    B,
}

impl CmVariant {
    pub fn scorer_id(self) -> &'static str {
        match self {
            CmVariant::A => "cm-a",
            CmVariant::B => "cm-b",
        }
    }

    pub fn architecture(self) -> CmArchitecture {
        match self {
            CmVariant::A => CmArchitecture::variant_a(),
            CmVariant::B => CmArchitecture::variant_b(),
        }
    }
}

/// CM training configuration.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub variant: CmVariant,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Fraction of each class, taken from the tail of the given lists, held
    /// out for the post-training EER check.
    pub holdout_fraction: f64,
    /// Held-out EER at or above this marks the outcome as undertrained.
    pub eer_threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: CmVariant::A,
            epochs: 40,
            batch_size: 16,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            holdout_fraction: 0.25,
            eer_threshold: 0.05,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), DetectorError> {
        let fail = |m: String| Err(DetectorError::InvalidTrainConfig(m));
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return fail(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.weight_decay < 0.0 {
            return fail("weight_decay must be >= 0".into());
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return fail(format!(
                "holdout_fraction must be in (0, 1), got {}",
                self.holdout_fraction
            ));
        }
        Ok(())
    }
}

/// Outcome of [`train_cm`]: the model, the per-epoch loss history and the
/// held-out EER. An EER at or above the configured threshold is reported as
/// `undertrained` rather than silently accepted.
#[derive(Debug, Clone)]
pub struct CmTraining {
    pub model: ToyCmModel,
    pub epoch_losses: Vec<f64>,
    pub heldout_eer: f64,
    pub undertrained: bool,
}

/// Softmax cross-entropy on two logits; returns the loss and its gradient
/// w.r.t. the logits. `label` is 0 for spoof, 1 for bona fide.
fn cross_entropy(logits: [f64; 2], label: usize) -> (f64, [f64; 2]) {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    let p = [e0 / z, e1 / z];
    let loss = -(p[label].ln());
    let mut grad = p;
    grad[label] -= 1.0;
    (loss, grad)
}

/// Trains a toy CM on bona fide vs spoofed waveforms with Adam on a softmax
/// cross-entropy loss, holding out the tail of each list for the EER check.
///
/// Deterministic: identical inputs, seed and config reproduce bitwise
/// identical weights. Per-batch gradients are evaluated in parallel across
/// batch elements and reduced in a fixed order.
pub fn train_cm(
    bona: &[Waveform],
    spoof: &[Waveform],
    config: &TrainConfig,
) -> Result<CmTraining, DetectorError> {
    train_cm_impl(bona, spoof, config, config.variant.architecture())
}

/// Training loop shared with gradient-check tests, which swap in a small
/// architecture.
pub(crate) fn train_cm_impl(
    bona: &[Waveform],
    spoof: &[Waveform],
    config: &TrainConfig,
    arch: CmArchitecture,
) -> Result<CmTraining, DetectorError> {
    config.validate()?;
    if bona.is_empty() {
        return Err(DetectorError::EmptyClass("bona fide"));
    }
    if spoof.is_empty() {
        return Err(DetectorError::EmptyClass("spoof"));
    }

    let holdout = |n: usize| -> usize {
        let d = ((n as f64) * config.holdout_fraction).round() as usize;
        d.clamp(1, n.saturating_sub(1).max(1))
    };
    let dev_b = holdout(bona.len());
    let dev_s = holdout(spoof.len());
    if dev_b >= bona.len() || dev_s >= spoof.len() {
        return Err(DetectorError::InvalidTrainConfig(
            "holdout split leaves an empty training class".into(),
        ));
    }
    let (train_b, heldout_b) = bona.split_at(bona.len() - dev_b);
    let (train_s, heldout_s) = spoof.split_at(spoof.len() - dev_s);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init_seed: u64 = rng.gen();
    let mut model = ToyCmModel::new_random(arch, config.variant.scorer_id(), init_seed)?;

    // (class, index): class 0 = spoof, 1 = bona fide; label == class.
    let mut examples: Vec<(usize, usize)> = (0..train_s.len())
        .map(|i| (0usize, i))
        .chain((0..train_b.len()).map(|i| (1usize, i)))
        .collect();

    let hyper = AdamHyper {
        learning_rate: config.learning_rate,
        ..AdamHyper::default()
    };
    let mut moments: Vec<AdamMoments> = model
        .param_groups()
        .iter()
        .map(|g| AdamMoments::zeros(g.len()))
        .collect();

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        examples.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in examples.chunks(config.batch_size) {
            let results: Vec<(f64, ParamGrads)> = batch
                .par_iter()
                .map(|&(label, idx)| {
                    let wave = if label == 0 { &train_s[idx] } else { &train_b[idx] };
                    let cache = model.forward(wave).expect("rates validated per batch");
                    let (loss, grad_logits) = cross_entropy(cache.logits, label);
                    let (_, grads) = model.backward(&cache, &grad_logits, false, true);
                    (loss, grads.expect("param grads requested"))
                })
                .collect();

            let scale = 1.0 / batch.len() as f64;
            let mut batch_grads = ParamGrads::zeros_like(&model);
            for (loss, grads) in &results {
                epoch_loss += loss;
                batch_grads.add_scaled(grads, scale);
            }
            if config.weight_decay > 0.0 {
                for (g, p) in batch_grads.groups_mut().into_iter().zip(model.param_groups()) {
                    for (gi, pi) in g.iter_mut().zip(p) {
                        *gi += config.weight_decay * pi;
                    }
                }
            }
            for (group, (params, grads)) in moments.iter_mut().zip(
                model
                    .param_groups_mut()
                    .into_iter()
                    .zip(batch_grads.groups()),
            ) {
                group.step(params, grads, &hyper);
            }
        }
        epoch_losses.push(epoch_loss / examples.len() as f64);
    }

    let score_all = |waves: &[Waveform]| -> Result<Vec<f64>, DetectorError> {
        waves.iter().map(|w| model.score(w)).collect()
    };
    let bona_scores = score_all(heldout_b)?;
    let spoof_scores = score_all(heldout_s)?;
    let (heldout_eer, _) = compute_eer(&bona_scores, &spoof_scores)?;

    Ok(CmTraining {
        undertrained: heldout_eer >= config.eer_threshold,
        model,
        epoch_losses,
        heldout_eer,
    })
}
