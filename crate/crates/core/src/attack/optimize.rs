//! The optimisation loop over Part-1 spoofed data and filter selection.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gradient::batch_objective_and_gradient;
use super::{adam_step_at, he_init_any_length, AdamState, AttackConfig, AttackError};
use crate::detector::DifferentiableScorer;
use crate::dsp::{MalafideFilter, Waveform};
use crate::metrics::success_rate;

/// Objective and success rate observed during one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-utterance objective over the epoch's batch passes.
    pub mean_objective: f64,
    /// Success rate of the end-of-epoch filter on the full Part-1 set.
    pub part1_success_rate: f64,
}

/// Record of one optimisation run.
///
/// `wall_clock` is measured but never serialized: report files must be
/// byte-identical across reruns with the same seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub attack_id: String,
    pub scorer_id: String,
    pub filter_length: usize,
    pub epochs: Vec<EpochStats>,
    /// Mean per-utterance objective of the final filter on the full Part-1 set.
    pub final_mean_objective: f64,
    /// Success rate of the final filter on the full Part-1 set.
    pub final_part1_success_rate: f64,
    /// Mean objective and success rate of the Dirac (identity) filter on the
    /// same data, the no-attack baseline.
    pub dirac_mean_objective: f64,
    pub dirac_success_rate: f64,
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl OptimizationReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn save_json(&self, path: &Path) -> Result<(), AttackError> {
        std::fs::write(path, self.to_json()).map_err(|e| {
            AttackError::InvalidConfig(format!("cannot write report {}: {e}", path.display()))
        })
    }

    /// Per-epoch CSV: `epoch,mean_objective,part1_success_rate`.
    pub fn epoch_csv(&self) -> String {
        let mut out = String::from("epoch,mean_objective,part1_success_rate\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{}\n",
                e.epoch, e.mean_objective, e.part1_success_rate
            ));
        }
        out
    }

    pub fn save_epoch_csv(&self, path: &Path) -> Result<(), AttackError> {
        std::fs::write(path, self.epoch_csv()).map_err(|e| {
            AttackError::InvalidConfig(format!("cannot write csv {}: {e}", path.display()))
        })
    }
}

/// Optimises a filter of `config.filter_length` taps against a frozen scorer
/// using the Part-1 spoofed utterances of one attack.
///
/// He initialisation, then per epoch: seeded shuffle, batches of
/// `config.batch_size` (the trailing partial batch included), and per batch
/// an analytic filter gradient followed by an Adam step that re-pins the
/// Dirac centre. The final-epoch filter is returned together with the run
/// report.
pub fn optimize_filter(
    scorer: &dyn DifferentiableScorer,
    attack_id: &str,
    part1_spoofs: &[Waveform],
    config: &AttackConfig,
) -> Result<(MalafideFilter, OptimizationReport), AttackError> {
    optimize_filter_observed(scorer, attack_id, part1_spoofs, config, |_, _, _| {})
}

/// [`optimize_filter`] with a per-batch observer, invoked with the projected
/// filter after every update; the in-loop Dirac assertion of the acceptance
/// suite hooks in here.
pub fn optimize_filter_observed(
    scorer: &dyn DifferentiableScorer,
    attack_id: &str,
    part1_spoofs: &[Waveform],
    config: &AttackConfig,
    mut observer: impl FnMut(&MalafideFilter, usize, usize),
) -> Result<(MalafideFilter, OptimizationReport), AttackError> {
    config.validate()?;
    if part1_spoofs.is_empty() {
        return Err(AttackError::EmptyDataset);
    }
    let started = Instant::now();
    let n = part1_spoofs.len();

    let mut filter = he_init_any_length(config.filter_length, scorer.sample_rate(), config.rng_seed)?;
    filter.set_identity(attack_id.to_string(), scorer.scorer_id().to_string());
    let mut state = AdamState::new(config.filter_length);

    let dirac = MalafideFilter::dirac(config.filter_length, scorer.sample_rate())?;
    let (dirac_sum, _) = batch_objective_and_gradient(scorer, &dirac, part1_spoofs)?;
    let dirac_mean_objective = dirac_sum / n as f64;
    let dirac_success_rate = success_rate(scorer, &dirac, part1_spoofs)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_objective = 0.0;
        for (batch_idx, batch_ids) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Waveform> = batch_ids
                .iter()
                .map(|&i| part1_spoofs[i].clone())
                .collect();
            let (batch_sum, gradient) = batch_objective_and_gradient(scorer, &filter, &batch)?;
            if !batch_sum.is_finite() {
                return Err(AttackError::NonFiniteObjective {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_objective += batch_sum;
            let (updated, next_state) =
                adam_step_at(filter, &gradient, state, config, epoch, batch_idx)?;
            filter = updated;
            state = next_state;
            // The Dirac invariant holds after every batch, exactly.
            assert_eq!(
                filter.coefficients()[filter.center()],
                1.0,
                "centre coefficient must stay pinned"
            );
            observer(&filter, epoch, batch_idx);
        }
        epochs.push(EpochStats {
            epoch,
            mean_objective: epoch_objective / n as f64,
            part1_success_rate: success_rate(scorer, &filter, part1_spoofs)?,
        });
    }

    let (final_sum, _) = batch_objective_and_gradient(scorer, &filter, part1_spoofs)?;
    let report = OptimizationReport {
        attack_id: attack_id.to_string(),
        scorer_id: scorer.scorer_id().to_string(),
        filter_length: config.filter_length,
        epochs,
        final_mean_objective: final_sum / n as f64,
        final_part1_success_rate: success_rate(scorer, &filter, part1_spoofs)?,
        dirac_mean_objective,
        dirac_success_rate,
        wall_clock: started.elapsed(),
    };
    Ok((filter, report))
}

/// Picks the candidate with the highest Part-1 success rate; ties go to the
/// shorter filter.
pub fn select_filter(
    candidates: Vec<(MalafideFilter, f64)>,
) -> Result<MalafideFilter, AttackError> {
    let mut best: Option<(MalafideFilter, f64)> = None;
    for (filter, rate) in candidates {
        best = Some(match best {
            None => (filter, rate),
            Some((best_filter, best_rate)) => {
                if rate > best_rate || (rate == best_rate && filter.len() < best_filter.len()) {
                    (filter, rate)
                } else {
                    (best_filter, best_rate)
                }
            }
        });
    }
    best.map(|(f, _)| f).ok_or(AttackError::NoCandidates)
}
