//! The differentiable-scorer contract plus two built-in desk-scale
//! convolutional countermeasures with forward scoring, input gradients via a
//! full backward pass, and a training loop.

pub mod layers;
mod model;
mod train;

pub use model::{CmArchitecture, ToyCmModel};
pub use train::{train_cm, CmTraining, CmVariant, TrainConfig};

use thiserror::Error;

use crate::dsp::Waveform;

/// Errors raised by scorers and CM training.
#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("sample rate mismatch: signal is {signal_hz} Hz but scorer expects {scorer_hz} Hz")]
    SampleRateMismatch { signal_hz: u32, scorer_hz: u32 },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("training requires a non-empty {0} class")]
    EmptyClass(&'static str),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("metric: {0}")]
    Metric(#[from] crate::metrics::MetricsError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A countermeasure that can score audio and expose the gradient of its
/// score with respect to every input sample.
///
/// `score_logits` returns exactly two logits, `(logit_spoof,
/// logit_bonafide)`; higher bona fide logits reflect greater support for the
/// bona fide class. The scalar score used everywhere downstream is
/// `logit_bonafide - logit_spoof`, which [`score`](Self::score) provides.
/// Parameters are frozen from the caller's point of view: scoring never
/// mutates the model.
pub trait DifferentiableScorer: Send + Sync {
    fn scorer_id(&self) -> &str;

    fn sample_rate(&self) -> u32;

    /// Inputs shorter than this are zero-padded, longer ones centre-cropped.
    fn expected_input_length(&self) -> usize;

    fn score_logits(&self, signal: &Waveform) -> Result<(f64, f64), DetectorError>;

    /// `d(logit_bonafide - logit_spoof) / d signal[t]` for every `t`; same
    /// length as the input, all entries finite.
    fn input_gradient(&self, signal: &Waveform) -> Result<Vec<f64>, DetectorError>;

    /// The scalar CM score, `logit_bonafide - logit_spoof`.
    fn score(&self, signal: &Waveform) -> Result<f64, DetectorError> {
        let (spoof, bonafide) = self.score_logits(signal)?;
        Ok(bonafide - spoof)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{convolve_same, MalafideFilter};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_wave(rng: &mut ChaCha8Rng, n: usize, rate: u32) -> Waveform {
        Waveform::new((0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(), rate).unwrap()
    }

    #[test]
    fn zero_model_scores_zero_and_has_zero_gradient() {
        let model = ToyCmModel::new_zero(CmArchitecture::tiny(64, 16_000), "zero").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_wave(&mut rng, 64, 16_000);
        assert_eq!(model.score_logits(&w).unwrap(), (0.0, 0.0));
        let grad = model.input_gradient(&w).unwrap();
        assert_eq!(grad.len(), 64);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn rejects_sample_rate_mismatch() {
        let model = ToyCmModel::new_zero(CmArchitecture::tiny(64, 16_000), "zero").unwrap();
        let w = Waveform::new(vec![0.1; 64], 8_000).unwrap();
        assert!(matches!(
            model.score_logits(&w),
            Err(DetectorError::SampleRateMismatch { .. })
        ));
    }

    #[test]
    fn scaling_linear_weights_scales_score_but_not_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut model =
            ToyCmModel::new_random(CmArchitecture::tiny(96, 16_000), "t", 11).unwrap();
        let w = random_wave(&mut rng, 96, 16_000);
        let base = model.score(&w).unwrap();
        assert!(base.abs() > 1e-12, "fixture must produce a nonzero score");
        let alpha = 3.5;
        for v in model.linear_w.iter_mut().chain(model.linear_b.iter_mut()) {
            *v *= alpha;
        }
        let scaled = model.score(&w).unwrap();
        assert!((scaled - alpha * base).abs() < 1e-9 * base.abs().max(1.0));
        assert_eq!(scaled > 0.0, base > 0.0);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = ToyCmModel::new_random(CmArchitecture::tiny(128, 16_000), "t", 7).unwrap();
        let w = random_wave(&mut rng, 128, 16_000);
        let grad = model.input_gradient(&w).unwrap();
        let h = 1e-5;
        for _ in 0..32 {
            let idx = rng.gen_range(0..w.len());
            let mut plus = w.samples().to_vec();
            plus[idx] += h;
            let mut minus = w.samples().to_vec();
            minus[idx] -= h;
            let sp = model
                .score(&Waveform::new(plus, 16_000).unwrap())
                .unwrap();
            let sm = model
                .score(&Waveform::new(minus, 16_000).unwrap())
                .unwrap();
            let fd = (sp - sm) / (2.0 * h);
            let scale = grad[idx].abs().max(fd.abs()).max(1e-8);
            assert!(
                (grad[idx] - fd).abs() / scale < 1e-5,
                "idx {idx}: analytic {} vs fd {fd}",
                grad[idx]
            );
        }
    }

    #[test]
    fn gradient_respects_crop_and_pad() {
        let model = ToyCmModel::new_random(CmArchitecture::tiny(64, 16_000), "t", 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);

        // Longer input: gradient outside the centre crop is zero.
        let long = random_wave(&mut rng, 100, 16_000);
        let grad = model.input_gradient(&long).unwrap();
        assert_eq!(grad.len(), 100);
        let start = (100 - 64) / 2;
        assert!(grad[..start].iter().all(|&g| g == 0.0));
        assert!(grad[start + 64..].iter().all(|&g| g == 0.0));

        // Shorter input: gradient has input length.
        let short = random_wave(&mut rng, 40, 16_000);
        let grad = model.input_gradient(&short).unwrap();
        assert_eq!(grad.len(), 40);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn single_linear_layer_gradient_is_the_weight_vector() {
        // With conv layers acting as identity-ish pass-through this is hard
        // to stage on the composed model, so check the contract directly on
        // a linear scorer built from the layer primitives.
        use super::layers::{linear_backward_input, linear_forward};
        let w = vec![0.3, -0.2, 0.5, 0.1, // spoof row
                     0.7, 0.4, -0.6, 0.2]; // bonafide row
        let b = vec![0.0, 0.0];
        let x = vec![0.25, -0.5, 0.75, 1.0];
        let logits = linear_forward(&x, &w, &b, 2);
        let _ = logits;
        let grad = linear_backward_input(&[-1.0, 1.0], &w, 4);
        let expected: Vec<f64> = (0..4).map(|i| w[4 + i] - w[i]).collect();
        assert_eq!(grad, expected);
    }

    #[test]
    fn chain_rule_matches_filter_cross_correlation() {
        // d score(x * m) / dx  ==  cross-correlation of m with the upstream
        // gradient evaluated at the filtered signal. The filter optimiser
        // relies on this identity.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = ToyCmModel::new_random(CmArchitecture::tiny(96, 16_000), "t", 21).unwrap();
        let x = random_wave(&mut rng, 96, 16_000);
        let coeffs: Vec<f64> = (0..7).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let filter = MalafideFilter::from_coefficients(coeffs.clone(), "a", "t", 16_000).unwrap();
        let filtered = convolve_same(&x, &filter).unwrap();
        let g_filtered = model.input_gradient(&filtered).unwrap();

        // Analytic composite gradient via finite differences on x.
        let h = 1e-6;
        let c = 3isize;
        for idx in [0usize, 10, 48, 95] {
            // cross-correlation: sum_k m[k + c] * g[idx + k]
            let mut expected = 0.0;
            for k in -c..=c {
                let t = idx as isize + k;
                if t >= 0 && (t as usize) < g_filtered.len() {
                    expected += coeffs[(k + c) as usize] * g_filtered[t as usize];
                }
            }
            let mut plus = x.samples().to_vec();
            plus[idx] += h;
            let mut minus = x.samples().to_vec();
            minus[idx] -= h;
            let sp = model
                .score(&convolve_same(&Waveform::new(plus, 16_000).unwrap(), &filter).unwrap())
                .unwrap();
            let sm = model
                .score(&convolve_same(&Waveform::new(minus, 16_000).unwrap(), &filter).unwrap())
                .unwrap();
            let fd = (sp - sm) / (2.0 * h);
            assert!(
                (expected - fd).abs() < 1e-8 * expected.abs().max(1.0).max(fd.abs()),
                "idx {idx}: cross-corr {expected} vs fd {fd}"
            );
        }
    }

    #[test]
    fn model_json_round_trip_is_bit_exact() {
        let model = ToyCmModel::new_random(CmArchitecture::variant_b(), "cm-b", 17).unwrap();
        let json = model.to_json();
        let back = ToyCmModel::from_json(&json).unwrap();
        assert_eq!(back.scorer_id(), "cm-b");
        assert_eq!(back.architecture(), model.architecture());
        for (a, b) in model.param_groups().iter().zip(back.param_groups()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(json, back.to_json());
    }

    #[test]
    fn model_json_rejects_wrong_shapes() {
        let model = ToyCmModel::new_random(CmArchitecture::tiny(64, 16_000), "t", 1).unwrap();
        let json = model.to_json();
        let tampered = json.replace("\"conv1_bias\":[0.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0]", "\"conv1_bias\":[0.0000000000000000e0]");
        assert_ne!(json, tampered, "test must actually tamper");
        assert!(matches!(
            ToyCmModel::from_json(&tampered),
            Err(DetectorError::ModelFormat(_))
        ));
    }
}
