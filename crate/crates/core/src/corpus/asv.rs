//! A toy speaker-verification system: cosine similarity of time-averaged
//! 40-band log-magnitude mel-style spectra.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::CorpusError;
use crate::dsp::Waveform;

const N_BANDS: usize = 40;
const FRAME: usize = 512;
const HOP: usize = 256;
const LOG_FLOOR: f64 = 1e-10;

fn hz_to_mel(hz: f64) -> f64 {
    2_595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2_595.0) - 1.0)
}

/// Triangular filterbank with `N_BANDS` mel-spaced bands over
/// `[0, sample_rate / 2]`, as weights over the `FRAME / 2 + 1` FFT bins.
fn filterbank(sample_rate: f64) -> Vec<Vec<f64>> {
    let n_bins = FRAME / 2 + 1;
    let max_mel = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..N_BANDS + 2)
        .map(|i| mel_to_hz(max_mel * i as f64 / (N_BANDS + 1) as f64))
        .collect();
    let bin_hz = |k: usize| k as f64 * sample_rate / FRAME as f64;
    (0..N_BANDS)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = bin_hz(k);
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Time-averaged 40-band log-magnitude spectrum of a waveform: Hann-windowed
/// 512-sample frames with hop 256, triangular mel-style bands, log, mean
/// over frames.
pub fn asv_embedding(waveform: &Waveform) -> Vec<f64> {
    let bank = filterbank(waveform.sample_rate() as f64);
    let fft = FftPlanner::new().plan_fft_forward(FRAME);
    let window: Vec<f64> = (0..FRAME)
        .map(|i| {
            0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / FRAME as f64).cos()
        })
        .collect();

    let samples = waveform.samples();
    let n_frames = if samples.len() <= FRAME {
        1
    } else {
        (samples.len() - FRAME) / HOP + 1
    };

    let mut embedding = vec![0.0f64; N_BANDS];
    let mut buf = vec![Complex::new(0.0, 0.0); FRAME];
    for frame in 0..n_frames {
        let start = frame * HOP;
        for (i, slot) in buf.iter_mut().enumerate() {
            let s = samples.get(start + i).copied().unwrap_or(0.0);
            *slot = Complex::new(s * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (b, weights) in bank.iter().enumerate() {
            let band: f64 = weights
                .iter()
                .zip(&buf)
                .map(|(w, z)| w * z.norm())
                .sum();
            embedding[b] += (band + LOG_FLOOR).ln();
        }
    }
    for e in &mut embedding {
        *e /= n_frames as f64;
    }
    embedding
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Cosine similarity between the test embedding and the mean enrollment
/// embedding; scores lie in [-1, 1], higher meaning "more the same speaker".
pub fn toy_asv_score(enrollment: &[Waveform], test: &Waveform) -> Result<f64, CorpusError> {
    if enrollment.is_empty() {
        return Err(CorpusError::EmptyEnrollment);
    }
    let mut mean = vec![0.0f64; N_BANDS];
    for w in enrollment {
        for (m, e) in mean.iter_mut().zip(asv_embedding(w)) {
            *m += e;
        }
    }
    for m in &mut mean {
        *m /= enrollment.len() as f64;
    }
    Ok(cosine(&mean, &asv_embedding(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::generate_bonafide;
    use crate::corpus::SpeakerSpec;

    fn speaker(i: usize) -> SpeakerSpec {
        SpeakerSpec {
            speaker_id: format!("spk{i:02}"),
            fundamental_frequency_hz: 110.0 + 40.0 * i as f64,
            resonances_hz: vec![450.0 + 90.0 * i as f64, 1_200.0 + 220.0 * i as f64, 2_600.0],
            rng_seed: 1_000 + i as u64,
        }
    }

    #[test]
    fn self_similarity_is_one() {
        let w = generate_bonafide(&speaker(0), 1.0, 16_000, 1).unwrap();
        let score = toy_asv_score(std::slice::from_ref(&w), &w).unwrap();
        assert!((score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_enrollment_is_rejected() {
        let w = generate_bonafide(&speaker(0), 1.0, 16_000, 1).unwrap();
        assert!(matches!(
            toy_asv_score(&[], &w),
            Err(CorpusError::EmptyEnrollment)
        ));
    }

    #[test]
    fn same_speaker_scores_above_other_speaker_on_average() {
        let spk_a = speaker(0);
        let spk_b = speaker(3);
        let enroll: Vec<Waveform> = (0..3)
            .map(|s| generate_bonafide(&spk_a, 1.0, 16_000, s).unwrap())
            .collect();
        let mut target = 0.0;
        let mut nontarget = 0.0;
        for s in 10..15 {
            let t = generate_bonafide(&spk_a, 1.0, 16_000, s).unwrap();
            let n = generate_bonafide(&spk_b, 1.0, 16_000, s).unwrap();
            target += toy_asv_score(&enroll, &t).unwrap();
            nontarget += toy_asv_score(&enroll, &n).unwrap();
        }
        assert!(
            target > nontarget,
            "target sum {target} must exceed non-target sum {nontarget}"
        );
    }

    #[test]
    fn embedding_has_expected_dimension_and_is_finite() {
        let w = generate_bonafide(&speaker(1), 0.5, 16_000, 9).unwrap();
        let e = asv_embedding(&w);
        assert_eq!(e.len(), 40);
        assert!(e.iter().all(|v| v.is_finite()));
    }
}
