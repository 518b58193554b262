//! Objective and analytic filter gradient.

use rayon::prelude::*;

use super::AttackError;
use crate::detector::DifferentiableScorer;
use crate::dsp::{convolve_same, MalafideFilter, Waveform};

/// The attack objective: the sum of scalar CM scores over the filtered
/// batch, `sum_i score(s_i * m)`. The attack maximises this.
pub fn objective(
    scorer: &dyn DifferentiableScorer,
    filter: &MalafideFilter,
    batch: &[Waveform],
) -> Result<f64, AttackError> {
    if batch.is_empty() {
        return Err(AttackError::EmptyDataset);
    }
    let mut total = 0.0;
    for spoof in batch {
        let filtered = convolve_same(spoof, filter)?;
        total += scorer
            .score(&filtered)
            .map_err(|e| AttackError::Scorer(e.to_string()))?;
    }
    Ok(total)
}

/// Ascent gradient of [`objective`] with respect to every filter
/// coefficient.
///
/// By the convolution chain rule, entry `k + c` is
/// `sum_i sum_t g_i[t] * s_i[t - k]` where `g_i` is the scorer's input
/// gradient at the filtered utterance and out-of-range signal indices are
/// zero: the cross-correlation of each upstream gradient with its input,
/// summed over the batch.
pub fn filter_gradient(
    scorer: &dyn DifferentiableScorer,
    filter: &MalafideFilter,
    batch: &[Waveform],
) -> Result<Vec<f64>, AttackError> {
    Ok(batch_objective_and_gradient(scorer, filter, batch)?.1)
}

/// Shared forward/backward pass: returns the summed objective and the ascent
/// gradient in one sweep so the optimisation loop pays for one forward pass
/// per utterance, not two. Per-utterance work runs in parallel; the batch
/// reduction is sequential in input order, keeping results deterministic.
pub(crate) fn batch_objective_and_gradient(
    scorer: &dyn DifferentiableScorer,
    filter: &MalafideFilter,
    batch: &[Waveform],
) -> Result<(f64, Vec<f64>), AttackError> {
    if batch.is_empty() {
        return Err(AttackError::EmptyDataset);
    }
    let per_utterance: Vec<Result<(f64, Vec<f64>), AttackError>> = batch
        .par_iter()
        .map(|spoof| {
            let filtered = convolve_same(spoof, filter)?;
            let (ls, lb) = scorer
                .score_logits(&filtered)
                .map_err(|e| AttackError::Scorer(e.to_string()))?;
            let upstream = scorer
                .input_gradient(&filtered)
                .map_err(|e| AttackError::Scorer(e.to_string()))?;
            Ok((lb - ls, cross_correlate(&upstream, spoof.samples(), filter.len())))
        })
        .collect();

    let mut total = 0.0;
    let mut gradient = vec![0.0; filter.len()];
    for item in per_utterance {
        let (score, partial) = item?;
        total += score;
        for (g, p) in gradient.iter_mut().zip(&partial) {
            *g += p;
        }
    }
    Ok((total, gradient))
}

/// `out[k + c] = sum_t upstream[t] * signal[t - k]` for `k` in `[-c, c]`.
fn cross_correlate(upstream: &[f64], signal: &[f64], filter_len: usize) -> Vec<f64> {
    let n = signal.len() as isize;
    debug_assert_eq!(upstream.len() as isize, n);
    let c = (filter_len as isize - 1) / 2;
    let mut out = vec![0.0; filter_len];
    for k in -c..=c {
        // t must satisfy 0 <= t < n and 0 <= t - k < n.
        let t_lo = k.max(0);
        let t_hi = (n - 1).min(n - 1 + k);
        let mut acc = 0.0;
        let mut t = t_lo;
        while t <= t_hi {
            acc += upstream[t as usize] * signal[(t - k) as usize];
            t += 1;
        }
        out[(k + c) as usize] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::he_init_any_length;
    use crate::detector::{CmArchitecture, ToyCmModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_wave(rng: &mut ChaCha8Rng, n: usize) -> Waveform {
        Waveform::new((0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16_000).unwrap()
    }

    #[test]
    fn dirac_objective_equals_unfiltered_score_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = ToyCmModel::new_random(CmArchitecture::tiny(128, 16_000), "t", 3).unwrap();
        let batch: Vec<Waveform> = (0..4).map(|_| random_wave(&mut rng, 128)).collect();
        let dirac = MalafideFilter::dirac(9, 16_000).unwrap();
        let filtered_sum = objective(&model, &dirac, &batch).unwrap();
        let direct_sum: f64 = batch.iter().map(|w| model.score(w).unwrap()).sum();
        assert!((filtered_sum - direct_sum).abs() < 1e-12);
    }

    #[test]
    fn zero_scorer_gives_zero_objective_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = ToyCmModel::new_zero(CmArchitecture::tiny(128, 16_000), "z").unwrap();
        let batch: Vec<Waveform> = (0..3).map(|_| random_wave(&mut rng, 128)).collect();
        let filter = he_init_any_length(9, 16_000, 7).unwrap();
        assert_eq!(objective(&model, &filter, &batch).unwrap(), 0.0);
        let grad = filter_gradient(&model, &filter, &batch).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_utterance_batch_is_its_filtered_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = ToyCmModel::new_random(CmArchitecture::tiny(128, 16_000), "t", 5).unwrap();
        let wave = random_wave(&mut rng, 128);
        let filter = he_init_any_length(9, 16_000, 11).unwrap();
        let total = objective(&model, &filter, std::slice::from_ref(&wave)).unwrap();
        let filtered = convolve_same(&wave, &filter).unwrap();
        assert!((total - model.score(&filtered).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let model = ToyCmModel::new_zero(CmArchitecture::tiny(128, 16_000), "z").unwrap();
        let filter = MalafideFilter::dirac(9, 16_000).unwrap();
        assert!(matches!(
            objective(&model, &filter, &[]),
            Err(AttackError::EmptyDataset)
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // The gating check for the whole attack: analytic filter gradient vs
        // central differences of the objective, small model, L = 9,
        // inputs of length 256.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = ToyCmModel::new_random(CmArchitecture::tiny(256, 16_000), "t", 13).unwrap();
        let batch: Vec<Waveform> = (0..3).map(|_| random_wave(&mut rng, 256)).collect();
        let filter = he_init_any_length(9, 16_000, 17).unwrap();
        let grad = filter_gradient(&model, &filter, &batch).unwrap();

        let h = 1e-5;
        for idx in 0..9 {
            let perturbed = |delta: f64| {
                let mut coeffs = filter.coefficients().to_vec();
                coeffs[idx] += delta;
                let f = MalafideFilter::from_coefficients(coeffs, "a", "t", 16_000).unwrap();
                objective(&model, &f, &batch).unwrap()
            };
            let fd = (perturbed(h) - perturbed(-h)) / (2.0 * h);
            let scale = grad[idx].abs().max(fd.abs()).max(1e-8);
            assert!(
                (grad[idx] - fd).abs() / scale < 1e-5,
                "tap {idx}: analytic {} vs fd {fd}",
                grad[idx]
            );
        }
    }

    #[test]
    fn impulse_input_reduces_gradient_to_shifted_upstream() {
        // With s = delta at position p, entry k+c of the cross-correlation
        // collapses to upstream[p + k]: verified by direct substitution.
        let upstream: Vec<f64> = (0..8).map(|i| (i as f64) * 0.5 - 1.0).collect();
        let mut signal = vec![0.0; 8];
        let p = 4;
        signal[p] = 1.0;
        let out = cross_correlate(&upstream, &signal, 5);
        let c = 2isize;
        for k in -c..=c {
            let t = p as isize + k;
            let expected = if (0..8).contains(&t) {
                upstream[t as usize]
            } else {
                0.0
            };
            assert_eq!(out[(k + c) as usize], expected, "lag {k}");
        }
    }
}
