//! Waveform synthesis: harmonic source-filter speech stand-ins and additive
//! AM-tone spoof artifacts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{mix_seed, CorpusError, SpeakerSpec, SpoofAttackSpec};
use crate::dsp::Waveform;

const HARMONICS: usize = 10;
const F0_JITTER: f64 = 0.01;
const NOISE_DB: f64 = -30.0;
const TARGET_RMS: f64 = 0.1;
const RESONATOR_BANDWIDTH_HZ: f64 = 100.0;
const AM_RATE_HZ: f64 = 4.0;
const AM_DEPTH: f64 = 0.5;

/// Synthesises one bona fide utterance: the first ten harmonics of the
/// speaker's fundamental with 1/k rolloff and random phases, shaped by
/// second-order resonators at the speaker's formant frequencies, plus
/// -30 dB noise, RMS-normalised to exactly 0.1.
pub fn generate_bonafide(
    speaker: &SpeakerSpec,
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<Waveform, CorpusError> {
    if duration_s < 0.5 {
        return Err(CorpusError::InvalidConfig(format!(
            "utterance duration must be >= 0.5 s, got {duration_s}"
        )));
    }
    let rate = sample_rate as f64;
    let nyquist = rate / 2.0;
    if !(80.0..=300.0).contains(&speaker.fundamental_frequency_hz) {
        return Err(CorpusError::InvalidConfig(format!(
            "speaker f0 must lie in [80, 300] Hz, got {}",
            speaker.fundamental_frequency_hz
        )));
    }
    if speaker.resonances_hz.iter().any(|&f| f <= 0.0 || f >= nyquist) {
        return Err(CorpusError::InvalidConfig(
            "speaker resonances must lie below Nyquist".into(),
        ));
    }

    let n = (duration_s * rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(speaker.rng_seed, "utterance", seed));

    let f0 = speaker.fundamental_frequency_hz * (1.0 + rng.gen_range(-F0_JITTER..=F0_JITTER));
    let phases: Vec<f64> = (0..HARMONICS)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();

    let mut samples = vec![0.0f64; n];
    for (i, s) in samples.iter_mut().enumerate() {
        let t = i as f64 / rate;
        let mut acc = 0.0;
        for (k, phi) in phases.iter().enumerate() {
            let h = (k + 1) as f64;
            if h * f0 < nyquist {
                acc += (std::f64::consts::TAU * h * f0 * t + phi).sin() / h;
            }
        }
        *s = acc;
    }

    for &resonance in &speaker.resonances_hz {
        apply_resonator(&mut samples, resonance, RESONATOR_BANDWIDTH_HZ, rate);
    }

    normalize_rms(&mut samples, 1.0);
    let noise_rms = 10f64.powf(NOISE_DB / 20.0);
    for s in samples.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *s += noise_rms * g;
    }
    normalize_rms(&mut samples, TARGET_RMS);

    Ok(Waveform::new(samples, sample_rate)?)
}

/// Two-pole resonator at `frequency_hz` applied in place.
fn apply_resonator(samples: &mut [f64], frequency_hz: f64, bandwidth_hz: f64, rate: f64) {
    let r = (-std::f64::consts::PI * bandwidth_hz / rate).exp();
    let omega = std::f64::consts::TAU * frequency_hz / rate;
    let a1 = 2.0 * r * omega.cos();
    let a2 = -r * r;
    let mut y1 = 0.0;
    let mut y2 = 0.0;
    for s in samples.iter_mut() {
        let y = *s + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *s = y;
    }
}

fn normalize_rms(samples: &mut [f64], target: f64) {
    let rms = (samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64).sqrt();
    if rms > 0.0 {
        let scale = target / rms;
        for s in samples.iter_mut() {
            *s *= scale;
        }
    }
}

/// Derives a spoofed utterance by adding an amplitude-modulated tone at the
/// attack's artifact frequency: `bona + amplitude * RMS(bona) * am_tone`,
/// with modulation rate 4 Hz and depth 0.5. Carrier and modulator phases are
/// drawn from `seed`. A zero amplitude returns the input exactly.
pub fn generate_spoof(
    bona: &Waveform,
    attack: &SpoofAttackSpec,
    seed: u64,
) -> Result<Waveform, CorpusError> {
    let nyquist = bona.sample_rate() as f64 / 2.0;
    if attack.artifact_frequency_hz <= 0.0 || attack.artifact_frequency_hz >= nyquist {
        return Err(CorpusError::InvalidConfig(format!(
            "artifact frequency {} Hz must lie in (0, {nyquist})",
            attack.artifact_frequency_hz
        )));
    }
    if attack.artifact_amplitude < 0.0 {
        return Err(CorpusError::InvalidConfig(
            "artifact amplitude must be >= 0".into(),
        ));
    }
    if attack.artifact_amplitude == 0.0 {
        return Ok(bona.clone());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let carrier_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let mod_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let rate = bona.sample_rate() as f64;
    let scale = attack.artifact_amplitude * bona.rms();
    let samples: Vec<f64> = bona
        .samples()
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let t = i as f64 / rate;
            let envelope = 1.0 + AM_DEPTH * (std::f64::consts::TAU * AM_RATE_HZ * t + mod_phase).sin();
            let carrier =
                (std::f64::consts::TAU * attack.artifact_frequency_hz * t + carrier_phase).sin();
            s + scale * envelope * carrier
        })
        .collect();
    Ok(Waveform::new(samples, bona.sample_rate())?)
}

/// Spoofed copies of defender-side bona fide utterances for CM training,
/// cycling through the attack catalog. These waveforms never enter the
/// manifest; they are the defender's own training material, derived
/// deterministically from the bona fide audio and `seed`.
pub fn defender_training_spoofs(
    bona: &[Waveform],
    attacks: &[SpoofAttackSpec],
    seed: u64,
) -> Result<Vec<Waveform>, CorpusError> {
    if attacks.is_empty() {
        return Err(CorpusError::InvalidConfig(
            "attack catalog must not be empty".into(),
        ));
    }
    bona.iter()
        .enumerate()
        .map(|(i, wave)| {
            let attack = &attacks[i % attacks.len()];
            generate_spoof(wave, attack, mix_seed(seed, "cm-spoof", i as u64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex;
    use rustfft::FftPlanner;

    fn test_speaker() -> SpeakerSpec {
        SpeakerSpec {
            speaker_id: "spk00".into(),
            fundamental_frequency_hz: 140.0,
            resonances_hz: vec![500.0, 1_500.0, 2_700.0],
            rng_seed: 99,
        }
    }

    fn spectrum_peak_hz(wave: &Waveform) -> f64 {
        let n_fft = wave.len().next_power_of_two();
        let mut buf: Vec<Complex<f64>> = wave
            .samples()
            .iter()
            .map(|&s| Complex::new(s, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(n_fft)
            .collect();
        FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
        let (peak_bin, _) = buf[..n_fft / 2]
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.norm().partial_cmp(&b.norm()).unwrap())
            .unwrap();
        peak_bin as f64 * wave.sample_rate() as f64 / n_fft as f64
    }

    #[test]
    fn bonafide_is_deterministic_and_rms_normalised() {
        let speaker = test_speaker();
        let a = generate_bonafide(&speaker, 1.0, 16_000, 7).unwrap();
        let b = generate_bonafide(&speaker, 1.0, 16_000, 7).unwrap();
        let c = generate_bonafide(&speaker, 1.0, 16_000, 8).unwrap();
        assert_eq!(a.samples(), b.samples());
        assert_ne!(a.samples(), c.samples());
        assert!((a.rms() - 0.1).abs() < 1e-6);
        assert_eq!(a.len(), 16_000);
    }

    #[test]
    fn bonafide_peak_sits_on_a_harmonic() {
        let speaker = test_speaker();
        for seed in [1u64, 2, 3] {
            let wave = generate_bonafide(&speaker, 1.0, 16_000, seed).unwrap();
            let peak = spectrum_peak_hz(&wave);
            let f0 = speaker.fundamental_frequency_hz;
            let bin = 16_000.0 / wave.len().next_power_of_two() as f64;
            let near_harmonic = (1..=10).any(|k| {
                let target = k as f64 * f0;
                (peak - target).abs() <= F0_JITTER * target + 2.0 * bin
            });
            assert!(near_harmonic, "seed {seed}: peak at {peak} Hz, f0 {f0}");
        }
    }

    #[test]
    fn bonafide_rejects_short_durations() {
        assert!(generate_bonafide(&test_speaker(), 0.25, 16_000, 1).is_err());
    }

    #[test]
    fn zero_amplitude_spoof_is_the_identity() {
        let bona = generate_bonafide(&test_speaker(), 1.0, 16_000, 3).unwrap();
        let attack = SpoofAttackSpec::new("SA0", 3_000.0, 0.0);
        let spoof = generate_spoof(&bona, &attack, 5).unwrap();
        assert_eq!(spoof.samples(), bona.samples());
    }

    #[test]
    fn spoof_adds_energy_and_a_tone_at_the_artifact_frequency() {
        let bona = generate_bonafide(&test_speaker(), 1.0, 16_000, 4).unwrap();
        let attack = SpoofAttackSpec::new("SA1", 3_600.0, 0.05);
        let spoof = generate_spoof(&bona, &attack, 6).unwrap();
        assert!(spoof.rms() >= bona.rms() - 1e-12);
        assert_eq!(spoof.len(), bona.len());

        let residual: Vec<f64> = spoof
            .samples()
            .iter()
            .zip(bona.samples())
            .map(|(s, b)| s - b)
            .collect();
        let residual = Waveform::new(residual, 16_000).unwrap();
        let peak = spectrum_peak_hz(&residual);
        // Carrier plus AM sidebands at +-4 Hz; allow a few bins of blur.
        assert!(
            (peak - 3_600.0).abs() < 10.0,
            "residual peak at {peak} Hz, expected near 3600"
        );
    }

    #[test]
    fn defender_spoofs_cycle_the_catalog() {
        let speaker = test_speaker();
        let bona: Vec<Waveform> = (0..4)
            .map(|i| generate_bonafide(&speaker, 1.0, 16_000, i).unwrap())
            .collect();
        let attacks = SpoofAttackSpec::default_catalog();
        let spoofs = defender_training_spoofs(&bona, &attacks, 11).unwrap();
        assert_eq!(spoofs.len(), 4);
        for (b, s) in bona.iter().zip(&spoofs) {
            assert_ne!(b.samples(), s.samples());
        }
    }
}
