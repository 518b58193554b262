//! The adversarial filter attack: Dirac-constrained He initialisation, the
//! summed-score objective, analytic filter gradients via the convolution
//! chain rule, Adam updates with a per-batch centre reset, the epoch loop
//! over Part-1 spoofed data, and success-rate-based selection across filter
//! lengths.

mod gradient;
mod optimize;

pub use gradient::{filter_gradient, objective};
pub use optimize::{
    optimize_filter, optimize_filter_observed, select_filter, EpochStats, OptimizationReport,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dsp::{DspError, MalafideFilter};
use crate::optim::{AdamHyper, AdamMoments};

/// Errors raised during filter optimisation.
#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack config: {0}")]
    InvalidConfig(String),
    #[error("optimisation requires a non-empty spoof dataset")]
    EmptyDataset,
    #[error("filter selection requires at least one candidate")]
    NoCandidates,
    #[error("gradient length {got} does not match filter length {expected}")]
    GradientLength { got: usize, expected: usize },
    #[error("non-finite gradient entry {index} (epoch {epoch}, batch {batch})")]
    NonFiniteGradient {
        index: usize,
        epoch: usize,
        batch: usize,
    },
    #[error("non-finite objective in epoch {epoch}, batch {batch}")]
    NonFiniteObjective { epoch: usize, batch: usize },
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("scorer: {0}")]
    Scorer(String),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

/// Configuration of one filter optimisation run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AttackConfig {
    /// Filter length; odd and at least 3. The CLI restricts user-facing runs
    /// to the catalog lengths.
    pub filter_length: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub rng_seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            filter_length: 257,
            epochs: 15,
            batch_size: 14,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            rng_seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        let fail = |m: String| Err(AttackError::InvalidConfig(m));
        if self.filter_length < 3 || self.filter_length % 2 == 0 {
            return fail(format!(
                "filter length must be odd and >= 3, got {}",
                self.filter_length
            ));
        }
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
        Ok(())
    }

    pub(crate) fn adam_hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// Adam moment estimates for the filter coefficients.
#[derive(Debug, Clone)]
pub struct AdamState {
    inner: AdamMoments,
}

impl AdamState {
    pub fn new(filter_length: usize) -> Self {
        AdamState {
            inner: AdamMoments::zeros(filter_length),
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.inner.first
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.inner.second
    }

    pub fn step_count(&self) -> u64 {
        self.inner.step_count
    }
}

/// Draws every coefficient i.i.d. uniform on `[-sqrt(3/L), +sqrt(3/L)]` and
/// pins the centre to exactly 1, so the initial filter resembles a
/// convolutive identity. Only catalog lengths are accepted.
pub fn he_init_filter(
    length: usize,
    sample_rate: u32,
    seed: u64,
) -> Result<MalafideFilter, AttackError> {
    if !MalafideFilter::is_catalog_length(length) {
        return Err(AttackError::Dsp(DspError::NonCatalogLength(length)));
    }
    he_init_any_length(length, sample_rate, seed)
}

/// He initialisation for any odd length >= 3; gradient-check tests and the
/// optimiser use non-catalog lengths such as 9.
pub(crate) fn he_init_any_length(
    length: usize,
    sample_rate: u32,
    seed: u64,
) -> Result<MalafideFilter, AttackError> {
    if length < 3 || length % 2 == 0 {
        return Err(AttackError::Dsp(DspError::InvalidFilterLength(length)));
    }
    let bound = (3.0 / length as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coefficients: Vec<f64> = (0..length)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    coefficients[(length - 1) / 2] = 1.0;
    Ok(MalafideFilter::from_coefficients(
        coefficients,
        "-",
        "-",
        sample_rate,
    )?)
}

/// Resets the centre coefficient to exactly 1, leaving every other
/// coefficient unchanged. Idempotent.
pub fn project_dirac(mut filter: MalafideFilter) -> MalafideFilter {
    let c = filter.center();
    filter.coefficients_mut()[c] = 1.0;
    filter
}

/// One Adam step on the filter coefficients.
///
/// `gradient` is the ascent gradient of the objective; the update descends
/// on its negation, with weight decay added as an L2 term for every
/// coefficient. After the update the centre coefficient is re-pinned to 1
/// (the per-batch Dirac reset) and the step count advances.
pub fn adam_step(
    filter: MalafideFilter,
    gradient: &[f64],
    state: AdamState,
    config: &AttackConfig,
) -> Result<(MalafideFilter, AdamState), AttackError> {
    adam_step_at(filter, gradient, state, config, 0, 0)
}

pub(crate) fn adam_step_at(
    mut filter: MalafideFilter,
    gradient: &[f64],
    mut state: AdamState,
    config: &AttackConfig,
    epoch: usize,
    batch: usize,
) -> Result<(MalafideFilter, AdamState), AttackError> {
    if gradient.len() != filter.len() {
        return Err(AttackError::GradientLength {
            got: gradient.len(),
            expected: filter.len(),
        });
    }
    if let Some(index) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(AttackError::NonFiniteGradient {
            index,
            epoch,
            batch,
        });
    }
    // Descent on the negated objective; L2 decay applies uniformly, the
    // centre is re-pinned right after anyway.
    let descent: Vec<f64> = gradient
        .iter()
        .zip(filter.coefficients())
        .map(|(g, w)| -g + config.weight_decay * w)
        .collect();
    state.inner.step(
        filter.coefficients_mut(),
        &descent,
        &config.adam_hyper(),
    );
    Ok((project_dirac(filter), state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FILTER_LENGTH_CATALOG;

    #[test]
    fn he_init_respects_bounds_for_every_catalog_length() {
        for &length in &FILTER_LENGTH_CATALOG {
            let filter = he_init_filter(length, 16_000, 123).unwrap();
            let bound = (3.0 / length as f64).sqrt();
            let c = filter.center();
            assert_eq!(filter.coefficients()[c], 1.0);
            for (i, &coef) in filter.coefficients().iter().enumerate() {
                if i != c {
                    assert!(
                        coef.abs() <= bound,
                        "L={length}, tap {i}: {coef} exceeds {bound}"
                    );
                }
            }
        }
    }

    #[test]
    fn he_init_is_seed_deterministic() {
        let a = he_init_filter(65, 16_000, 5).unwrap();
        let b = he_init_filter(65, 16_000, 5).unwrap();
        let c = he_init_filter(65, 16_000, 6).unwrap();
        assert_eq!(a.coefficients(), b.coefficients());
        assert_ne!(a.coefficients(), c.coefficients());
    }

    #[test]
    fn he_init_rejects_non_catalog_lengths() {
        assert!(matches!(
            he_init_filter(100, 16_000, 0),
            Err(AttackError::Dsp(DspError::NonCatalogLength(100)))
        ));
        assert!(matches!(
            he_init_filter(67, 16_000, 0),
            Err(AttackError::Dsp(DspError::NonCatalogLength(67)))
        ));
    }

    #[test]
    fn he_init_mean_is_statistically_centred() {
        // Standard error of the mean of L-1 uniform draws on [-b, b] is
        // b / sqrt(3 (L-1)); the empirical mean must sit within 3 sigma.
        let length = 4_097;
        let filter = he_init_filter(length, 16_000, 2_024).unwrap();
        let c = filter.center();
        let sum: f64 = filter
            .coefficients()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != c)
            .map(|(_, &v)| v)
            .sum();
        let mean = sum / (length - 1) as f64;
        let three_sigma = 3.0 * (3.0 / length as f64).sqrt() / (3.0 * (length - 1) as f64).sqrt();
        assert!(
            mean.abs() <= three_sigma,
            "mean {mean} outside +-{three_sigma}"
        );
    }

    #[test]
    fn project_dirac_pins_centre_and_is_idempotent() {
        let filter =
            MalafideFilter::from_coefficients(vec![0.3, 0.7, -0.1], "a", "s", 16_000).unwrap();
        let projected = project_dirac(filter);
        assert_eq!(projected.coefficients(), &[0.3, 1.0, -0.1]);
        let again = project_dirac(projected.clone());
        assert_eq!(again, projected);
    }

    #[test]
    fn adam_zero_gradient_zero_decay_is_identity_up_to_projection() {
        let mut config = AttackConfig::default();
        config.weight_decay = 0.0;
        config.filter_length = 3;
        let filter =
            MalafideFilter::from_coefficients(vec![0.2, 0.9, -0.1], "a", "s", 16_000).unwrap();
        let state = AdamState::new(3);
        let (updated, state) = adam_step(filter, &[0.0, 0.0, 0.0], state, &config).unwrap();
        assert_eq!(updated.coefficients(), &[0.2, 1.0, -0.1]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_single_step_matches_hand_calculation() {
        // theta = [0.2, 1, -0.1], ascent gradient [0.5, 0, -0.3],
        // lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, no decay.
        // Descent gradient g = [-0.5, 0, 0.3]:
        //   m_hat = g, v_hat = g^2, step = lr * g / (|g| + eps),
        // so theta' = [0.2 + 1e-3 * (1 - 2e-8), 1, -0.1 - 1e-3 * (1 - 3.3e-8)].
        let mut config = AttackConfig::default();
        config.weight_decay = 0.0;
        config.filter_length = 3;
        let filter =
            MalafideFilter::from_coefficients(vec![0.2, 1.0, -0.1], "a", "s", 16_000).unwrap();
        let state = AdamState::new(3);
        let (updated, state) = adam_step(filter, &[0.5, 0.0, -0.3], state, &config).unwrap();
        assert!((updated.coefficients()[0] - 0.20099999998).abs() < 1e-12);
        assert_eq!(updated.coefficients()[1], 1.0);
        assert!((updated.coefficients()[2] - (-0.10099999996666667)).abs() < 1e-12);
        assert_eq!(state.step_count(), 1);
        assert!((state.first_moment()[0] - (-0.05)).abs() < 1e-15);
        assert!((state.second_moment()[0] - 0.00025).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_shrinks_off_centre_coefficients_monotonically() {
        let mut config = AttackConfig::default();
        config.weight_decay = 1e-2;
        config.learning_rate = 1e-3;
        config.filter_length = 3;
        let mut filter =
            MalafideFilter::from_coefficients(vec![0.5, 1.0, -0.4], "a", "s", 16_000).unwrap();
        let mut state = AdamState::new(3);
        let mut prev = (0.5f64, -0.4f64);
        for _ in 0..10 {
            let (f, s) = adam_step(filter, &[0.0, 0.0, 0.0], state, &config).unwrap();
            filter = f;
            state = s;
            let now = (filter.coefficients()[0], filter.coefficients()[2]);
            assert!(now.0 < prev.0 && now.0 > 0.0, "{:?} -> {:?}", prev, now);
            assert!(now.1 > prev.1 && now.1 < 0.0, "{:?} -> {:?}", prev, now);
            assert_eq!(filter.coefficients()[1], 1.0);
            prev = now;
        }
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let config = AttackConfig {
            filter_length: 3,
            ..AttackConfig::default()
        };
        let filter = MalafideFilter::dirac(3, 16_000).unwrap();
        let err = adam_step(filter, &[0.0, f64::NAN, 0.0], AdamState::new(3), &config)
            .unwrap_err();
        assert!(matches!(err, AttackError::NonFiniteGradient { index: 1, .. }));
    }
}
