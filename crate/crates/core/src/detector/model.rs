//! The built-in convolutional countermeasure models.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::layers::{
    conv1d_backward_input, conv1d_backward_params, conv1d_forward, global_avg_pool_backward,
    global_avg_pool_forward, linear_backward_input, linear_backward_params, linear_forward,
    maxpool_backward, maxpool_forward, relu_backward, relu_forward, ConvSpec,
};
use super::{DetectorError, DifferentiableScorer};
use crate::dsp::Waveform;
use crate::json17;

const MODEL_FORMAT_VERSION: u32 = 1;

/// Inputs are RMS-normalised to this level before the first conv layer.
const INPUT_TARGET_RMS: f64 = 0.1;

/// Shape of a toy CM: conv -> ReLU -> maxpool -> conv -> ReLU -> global
/// average pool -> linear, scoring on two logits (0 = spoof, 1 = bona fide).
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CmArchitecture {
    pub conv1: ConvSpec,
    pub pool_window: usize,
    pub conv2: ConvSpec,
    pub expected_input_length: usize,
    pub sample_rate: u32,
}

impl CmArchitecture {
    /// The primary CM: conv kernels 64 and 32 over 1 s of 16 kHz audio.
    pub fn variant_a() -> Self {
        CmArchitecture {
            conv1: ConvSpec {
                in_channels: 1,
                out_channels: 8,
                kernel: 64,
                stride: 8,
            },
            pool_window: 4,
            conv2: ConvSpec {
                in_channels: 8,
                out_channels: 16,
                kernel: 32,
                stride: 4,
            },
            expected_input_length: 16_000,
            sample_rate: 16_000,
        }
    }

    /// A second CM with different receptive fields (kernels 48 and 24) for
    /// black-box transfer experiments.
    pub fn variant_b() -> Self {
        CmArchitecture {
            conv1: ConvSpec {
                in_channels: 1,
                out_channels: 8,
                kernel: 48,
                stride: 8,
            },
            pool_window: 4,
            conv2: ConvSpec {
                in_channels: 8,
                out_channels: 16,
                kernel: 24,
                stride: 4,
            },
            expected_input_length: 16_000,
            sample_rate: 16_000,
        }
    }

    /// A small architecture for gradient checks on short inputs.
    #[doc(hidden)]
    pub fn tiny(expected_input_length: usize, sample_rate: u32) -> Self {
        CmArchitecture {
            conv1: ConvSpec {
                in_channels: 1,
                out_channels: 3,
                kernel: 7,
                stride: 2,
            },
            pool_window: 2,
            conv2: ConvSpec {
                in_channels: 3,
                out_channels: 4,
                kernel: 5,
                stride: 2,
            },
            expected_input_length,
            sample_rate,
        }
    }

    fn validate(&self) -> Result<(), DetectorError> {
        if self.conv1.in_channels != 1 {
            return Err(DetectorError::InvalidArchitecture(
                "conv1 must take a single input channel".into(),
            ));
        }
        if self.conv2.in_channels != self.conv1.out_channels {
            return Err(DetectorError::InvalidArchitecture(
                "conv2 input channels must match conv1 output channels".into(),
            ));
        }
        if self.conv1.stride == 0 || self.conv2.stride == 0 || self.pool_window == 0 {
            return Err(DetectorError::InvalidArchitecture(
                "strides and pool window must be positive".into(),
            ));
        }
        if self.sample_rate == 0 {
            return Err(DetectorError::InvalidArchitecture(
                "sample rate must be positive".into(),
            ));
        }
        // The whole pipeline must leave at least one frame.
        let l1 = self
            .expected_input_length
            .checked_sub(self.conv1.kernel)
            .map(|d| d / self.conv1.stride + 1)
            .unwrap_or(0);
        let lp = l1 / self.pool_window;
        if lp < self.conv2.kernel {
            return Err(DetectorError::InvalidArchitecture(format!(
                "input length {} leaves no frames for conv2",
                self.expected_input_length
            )));
        }
        Ok(())
    }

    fn conv1_out_len(&self) -> usize {
        self.conv1.out_len(self.expected_input_length)
    }

    fn pool_out_len(&self) -> usize {
        self.conv1_out_len() / self.pool_window
    }

    fn conv2_out_len(&self) -> usize {
        self.conv2.out_len(self.pool_out_len())
    }
}

/// A deterministic, double-precision toy countermeasure implementing
/// [`DifferentiableScorer`]. Weights are frozen during attack optimisation;
/// only [`super::train_cm`] mutates them.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyCmModel {
    arch: CmArchitecture,
    scorer_id: String,
    pub(super) conv1_w: Vec<f64>,
    pub(super) conv1_b: Vec<f64>,
    pub(super) conv2_w: Vec<f64>,
    pub(super) conv2_b: Vec<f64>,
    pub(super) linear_w: Vec<f64>,
    pub(super) linear_b: Vec<f64>,
}

/// Activations cached by a forward pass, consumed by the backward pass.
pub(super) struct ForwardCache {
    /// Input after crop/pad and RMS normalisation; what conv1 consumed.
    fitted: Vec<f64>,
    /// Scale applied by the RMS normalisation (1 for silent input).
    norm_scale: f64,
    pre1: Vec<f64>,
    pooled: Vec<f64>,
    argmax: Vec<usize>,
    pre2: Vec<f64>,
    gap: Vec<f64>,
    pub(super) logits: [f64; 2],
}

/// Per-parameter-group gradients, in model layout.
#[derive(Debug, Clone)]
pub(super) struct ParamGrads {
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    pub linear_w: Vec<f64>,
    pub linear_b: Vec<f64>,
}

impl ParamGrads {
    pub(super) fn zeros_like(model: &ToyCmModel) -> Self {
        ParamGrads {
            conv1_w: vec![0.0; model.conv1_w.len()],
            conv1_b: vec![0.0; model.conv1_b.len()],
            conv2_w: vec![0.0; model.conv2_w.len()],
            conv2_b: vec![0.0; model.conv2_b.len()],
            linear_w: vec![0.0; model.linear_w.len()],
            linear_b: vec![0.0; model.linear_b.len()],
        }
    }

    pub(super) fn add_scaled(&mut self, other: &ParamGrads, scale: f64) {
        for (a, b) in self.groups_mut().into_iter().zip(other.groups()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub(super) fn groups(&self) -> [&[f64]; 6] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.linear_w,
            &self.linear_b,
        ]
    }

    pub(super) fn groups_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.linear_w,
            &mut self.linear_b,
        ]
    }
}

impl ToyCmModel {
    /// Seeded initialisation: the first conv layer starts as a bank of
    /// Hann-windowed cosine (Gabor) band-pass atoms with centre frequencies
    /// spread across the band, jittered and phase-randomised per seed; the
    /// remaining layers are He-uniform with zero biases.
    ///
    /// Raw-waveform spoofing detectors ship spectrally selective first
    /// layers for the same reason: narrowband artifact energy is invisible
    /// to white-noise kernels until long after desk-scale training budgets.
    pub fn new_random(arch: CmArchitecture, scorer_id: impl Into<String>, seed: u64) -> Result<Self, DetectorError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let kernel = arch.conv1.kernel;
        let nyquist = arch.sample_rate as f64 / 2.0;
        let (low, high) = (0.04 * nyquist, 0.96 * nyquist);
        let channels = arch.conv1.out_channels;
        let mut conv1_w = Vec::with_capacity(arch.conv1.weight_len());
        for ch in 0..channels {
            let spacing = (high - low) / channels as f64;
            let center = low
                + (ch as f64 + 0.5) * spacing
                + rng.gen_range(-0.125..=0.125) * spacing;
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let mid = (kernel - 1) as f64 / 2.0;
            let mut atom: Vec<f64> = (0..kernel)
                .map(|j| {
                    let hann = 0.5
                        - 0.5
                            * (std::f64::consts::TAU * j as f64 / (kernel - 1) as f64).cos();
                    let omega =
                        std::f64::consts::TAU * center / arch.sample_rate as f64;
                    hann * (omega * (j as f64 - mid) + phase).cos()
                })
                .collect();
            let norm = atom.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut atom {
                *v /= norm;
            }
            conv1_w.extend(atom);
        }

        let mut he = |n: usize, fan_in: usize| -> Vec<f64> {
            let bound = (6.0 / fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
        };
        let conv2_w = he(arch.conv2.weight_len(), arch.conv2.in_channels * arch.conv2.kernel);
        let linear_w = he(2 * arch.conv2.out_channels, arch.conv2.out_channels);
        Ok(ToyCmModel {
            conv1_b: vec![0.0; arch.conv1.out_channels],
            conv2_b: vec![0.0; arch.conv2.out_channels],
            linear_b: vec![0.0; 2],
            conv1_w,
            conv2_w,
            linear_w,
            scorer_id: scorer_id.into(),
            arch,
        })
    }

    /// All-zero weights; scores every input as (0, 0). Useful as a test fixture.
    pub fn new_zero(arch: CmArchitecture, scorer_id: impl Into<String>) -> Result<Self, DetectorError> {
        arch.validate()?;
        Ok(ToyCmModel {
            conv1_w: vec![0.0; arch.conv1.weight_len()],
            conv1_b: vec![0.0; arch.conv1.out_channels],
            conv2_w: vec![0.0; arch.conv2.weight_len()],
            conv2_b: vec![0.0; arch.conv2.out_channels],
            linear_w: vec![0.0; 2 * arch.conv2.out_channels],
            linear_b: vec![0.0; 2],
            scorer_id: scorer_id.into(),
            arch,
        })
    }

    pub fn architecture(&self) -> &CmArchitecture {
        &self.arch
    }

    /// Crops or pads `samples` to the model's expected input length:
    /// longer inputs are centre-cropped, shorter inputs zero-padded on the
    /// right.
    fn fit_input(&self, samples: &[f64]) -> Vec<f64> {
        let target = self.arch.expected_input_length;
        let n = samples.len();
        if n == target {
            samples.to_vec()
        } else if n > target {
            let start = (n - target) / 2;
            samples[start..start + target].to_vec()
        } else {
            let mut fitted = vec![0.0; target];
            fitted[..n].copy_from_slice(samples);
            fitted
        }
    }

    pub(super) fn forward_fitted(&self, fitted: Vec<f64>) -> ForwardCache {
        // RMS-normalise the input so decisions ride on spectral shape, not
        // on gain an adversary could manipulate for free. Silent input
        // passes through unscaled.
        let n = fitted.len() as f64;
        let rms = (fitted.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        let (fitted, norm_scale) = if rms > 0.0 {
            let c = INPUT_TARGET_RMS / rms;
            (fitted.iter().map(|v| v * c).collect::<Vec<f64>>(), c)
        } else {
            (fitted, 1.0)
        };

        let a = &self.arch;
        let pre1 = conv1d_forward(&a.conv1, &fitted, a.expected_input_length, &self.conv1_w, &self.conv1_b);
        let act1 = relu_forward(&pre1);
        let (pooled, argmax) = maxpool_forward(&act1, a.conv1.out_channels, a.conv1_out_len(), a.pool_window);
        let pre2 = conv1d_forward(&a.conv2, &pooled, a.pool_out_len(), &self.conv2_w, &self.conv2_b);
        let act2 = relu_forward(&pre2);
        let gap = global_avg_pool_forward(&act2, a.conv2.out_channels, a.conv2_out_len());
        let logits_vec = linear_forward(&gap, &self.linear_w, &self.linear_b, 2);
        ForwardCache {
            fitted,
            norm_scale,
            pre1,
            pooled,
            argmax,
            pre2,
            gap,
            logits: [logits_vec[0], logits_vec[1]],
        }
    }

    pub(super) fn forward(&self, signal: &Waveform) -> Result<ForwardCache, DetectorError> {
        if signal.sample_rate() != self.arch.sample_rate {
            return Err(DetectorError::SampleRateMismatch {
                signal_hz: signal.sample_rate(),
                scorer_hz: self.arch.sample_rate,
            });
        }
        Ok(self.forward_fitted(self.fit_input(signal.samples())))
    }

    /// Backpropagates `grad_logits` to the fitted input and, when requested,
    /// to the parameters.
    pub(super) fn backward(
        &self,
        cache: &ForwardCache,
        grad_logits: &[f64; 2],
        want_input: bool,
        want_params: bool,
    ) -> (Option<Vec<f64>>, Option<ParamGrads>) {
        let a = &self.arch;
        let grad_gap = linear_backward_input(grad_logits, &self.linear_w, a.conv2.out_channels);
        let (lin_gw, lin_gb) = if want_params {
            linear_backward_params(grad_logits, &cache.gap)
        } else {
            (Vec::new(), Vec::new())
        };

        let grad_act2 = global_avg_pool_backward(&grad_gap, a.conv2.out_channels, a.conv2_out_len());
        let grad_pre2 = relu_backward(&grad_act2, &cache.pre2);
        let (c2_gw, c2_gb) = if want_params {
            conv1d_backward_params(&a.conv2, &grad_pre2, &cache.pooled, a.pool_out_len())
        } else {
            (Vec::new(), Vec::new())
        };

        let grad_pooled = conv1d_backward_input(&a.conv2, &grad_pre2, a.pool_out_len(), &self.conv2_w);
        let grad_act1 = maxpool_backward(&grad_pooled, &cache.argmax, a.conv1.out_channels * a.conv1_out_len());
        let grad_pre1 = relu_backward(&grad_act1, &cache.pre1);
        let (c1_gw, c1_gb) = if want_params {
            conv1d_backward_params(&a.conv1, &grad_pre1, &cache.fitted, a.expected_input_length)
        } else {
            (Vec::new(), Vec::new())
        };

        let grad_input = want_input.then(|| {
            let grad_normed =
                conv1d_backward_input(&a.conv1, &grad_pre1, a.expected_input_length, &self.conv1_w);
            // Back through the RMS normalisation u = c * x:
            // g_x = c * (g_u - (g_u . u) u / |u|^2). Silent input skipped.
            let norm_sq: f64 = cache.fitted.iter().map(|u| u * u).sum();
            if norm_sq == 0.0 {
                return grad_normed;
            }
            let projection: f64 = grad_normed
                .iter()
                .zip(&cache.fitted)
                .map(|(g, u)| g * u)
                .sum::<f64>()
                / norm_sq;
            grad_normed
                .iter()
                .zip(&cache.fitted)
                .map(|(g, u)| cache.norm_scale * (g - projection * u))
                .collect()
        });
        let grads = want_params.then_some(ParamGrads {
            conv1_w: c1_gw,
            conv1_b: c1_gb,
            conv2_w: c2_gw,
            conv2_b: c2_gb,
            linear_w: lin_gw,
            linear_b: lin_gb,
        });
        (grad_input, grads)
    }

    pub(super) fn param_groups_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.linear_w,
            &mut self.linear_b,
        ]
    }

    pub(super) fn param_groups(&self) -> [&[f64]; 6] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.linear_w,
            &self.linear_b,
        ]
    }

    /// Serializes the model (architecture and weights, 17 significant digits).
    pub fn to_json(&self) -> String {
        let mut out = String::new();
        out.push_str("{\"format_version\":");
        out.push_str(&MODEL_FORMAT_VERSION.to_string());
        out.push_str(",\"scorer_id\":");
        json17::push_str(&mut out, &self.scorer_id);
        out.push_str(",\"architecture\":");
        out.push_str(&serde_json::to_string(&self.arch).expect("architecture serializes"));
        out.push_str(",\"weights\":{");
        let names = [
            "conv1_weight",
            "conv1_bias",
            "conv2_weight",
            "conv2_bias",
            "linear_weight",
            "linear_bias",
        ];
        for (i, (name, group)) in names.iter().zip(self.param_groups()).enumerate() {
            if i > 0 {
                out.push(',');
            }
            json17::push_str(&mut out, name);
            out.push(':');
            json17::push_f64_array(&mut out, group);
        }
        out.push_str("}}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self, DetectorError> {
        #[derive(Deserialize)]
        struct Weights {
            conv1_weight: Vec<f64>,
            conv1_bias: Vec<f64>,
            conv2_weight: Vec<f64>,
            conv2_bias: Vec<f64>,
            linear_weight: Vec<f64>,
            linear_bias: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct ModelFile {
            format_version: u32,
            scorer_id: String,
            architecture: CmArchitecture,
            weights: Weights,
        }

        let raw: ModelFile =
            serde_json::from_str(text).map_err(|e| DetectorError::ModelFormat(e.to_string()))?;
        if raw.format_version != MODEL_FORMAT_VERSION {
            return Err(DetectorError::ModelFormat(format!(
                "unsupported format_version {} (expected {MODEL_FORMAT_VERSION})",
                raw.format_version
            )));
        }
        raw.architecture.validate()?;
        let model = ToyCmModel {
            conv1_w: raw.weights.conv1_weight,
            conv1_b: raw.weights.conv1_bias,
            conv2_w: raw.weights.conv2_weight,
            conv2_b: raw.weights.conv2_bias,
            linear_w: raw.weights.linear_weight,
            linear_b: raw.weights.linear_bias,
            scorer_id: raw.scorer_id,
            arch: raw.architecture,
        };
        let expected = [
            model.arch.conv1.weight_len(),
            model.arch.conv1.out_channels,
            model.arch.conv2.weight_len(),
            model.arch.conv2.out_channels,
            2 * model.arch.conv2.out_channels,
            2,
        ];
        for (group, (&want, name)) in model.param_groups().iter().zip(expected.iter().zip([
            "conv1_weight",
            "conv1_bias",
            "conv2_weight",
            "conv2_bias",
            "linear_weight",
            "linear_bias",
        ])) {
            if group.len() != want {
                return Err(DetectorError::ModelFormat(format!(
                    "{name} has {} values, architecture expects {want}",
                    group.len()
                )));
            }
            if let Some(i) = group.iter().position(|v| !v.is_finite()) {
                return Err(DetectorError::ModelFormat(format!(
                    "{name}[{i}] is not finite"
                )));
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), DetectorError> {
        std::fs::write(path, self.to_json()).map_err(|e| DetectorError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DetectorError> {
        let text = std::fs::read_to_string(path).map_err(|e| DetectorError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }
}

impl DifferentiableScorer for ToyCmModel {
    fn scorer_id(&self) -> &str {
        &self.scorer_id
    }

    fn sample_rate(&self) -> u32 {
        self.arch.sample_rate
    }

    fn expected_input_length(&self) -> usize {
        self.arch.expected_input_length
    }

    fn score_logits(&self, signal: &Waveform) -> Result<(f64, f64), DetectorError> {
        let cache = self.forward(signal)?;
        Ok((cache.logits[0], cache.logits[1]))
    }

    fn input_gradient(&self, signal: &Waveform) -> Result<Vec<f64>, DetectorError> {
        let cache = self.forward(signal)?;
        // d(logit_bonafide - logit_spoof) / d logits = [-1, +1].
        let (grad_fitted, _) = self.backward(&cache, &[-1.0, 1.0], true, false);
        let grad_fitted = grad_fitted.expect("input gradient requested");

        // Map back through the crop/pad onto the original sample axis.
        let n = signal.len();
        let target = self.arch.expected_input_length;
        let mut grad = vec![0.0; n];
        if n == target {
            grad.copy_from_slice(&grad_fitted);
        } else if n > target {
            let start = (n - target) / 2;
            grad[start..start + target].copy_from_slice(&grad_fitted);
        } else {
            grad.copy_from_slice(&grad_fitted[..n]);
        }
        Ok(grad)
    }
}
