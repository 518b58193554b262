//! Adversarial linear time-invariant (LTI) filter attacks against audio
//! spoofing countermeasures.
//!
//! A spoofing countermeasure (CM) scores an utterance as bona fide or
//! spoofed. This crate optimises a short non-causal FIR filter per spoofing
//! attack such that convolving spoofed audio with the filter drives a frozen
//! CM towards the bona fide class, while a pinned unit centre tap keeps the
//! filter close to a convolutive identity and so preserves the speech itself.
//!
//! The crate is organised around that experiment:
//!
//! * [`dsp`] — waveforms, non-causal "same" convolution, filter spectra and
//!   WAV I/O.
//! * [`detector`] — the differentiable scorer contract and two small built-in
//!   convolutional CMs with from-scratch backpropagation.
//! * [`attack`] — Dirac-constrained filter initialisation, analytic filter
//!   gradients, Adam updates with per-batch centre reset, and filter
//!   selection across lengths.
//! * [`metrics`] — score normalisation, attack success rate, EER, score
//!   fusion and SASV-EER.
//! * [`corpus`] — a deterministic synthetic corpus with parameterised attack
//!   artifacts, simulated speakers and a toy ASV system.

pub mod attack;
pub mod corpus;
pub mod detector;
pub mod dsp;
pub mod eval;
pub mod metrics;

mod json17;
mod optim;

pub use attack::{AdamState, AttackConfig, OptimizationReport};
pub use corpus::{AttackDataset, Corpus, ProtocolConfig, SpeakerSpec, SpoofAttackSpec};
pub use detector::{CmTraining, DifferentiableScorer, ToyCmModel, TrainConfig};
pub use dsp::{FrequencyResponse, MalafideFilter, Waveform};
pub use metrics::TrialScores;
