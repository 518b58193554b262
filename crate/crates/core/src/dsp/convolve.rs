//! Zero-padded "same" convolution with a non-causal filter.

use super::{DspError, MalafideFilter, Waveform};

/// Convolves `signal` with `filter`, returning a signal of identical length
/// and sample rate.
///
/// The filter is non-causal: taps reach both past and future samples,
/// `out[t] = sum_{k=-c..c} coefficients[k + c] * signal[t - k]`, with
/// out-of-range signal indices treated as zero. A pure Dirac filter is an
/// exact identity.
pub fn convolve_same(signal: &Waveform, filter: &MalafideFilter) -> Result<Waveform, DspError> {
    if signal.sample_rate() != filter.sample_rate() {
        return Err(DspError::SampleRateMismatch {
            signal_hz: signal.sample_rate(),
            filter_hz: filter.sample_rate(),
        });
    }
    let out = convolve_same_raw(signal.samples(), filter.coefficients());
    Waveform::new(out, signal.sample_rate())
}

/// Same-convolution on raw slices; `coefficients.len()` must be odd.
pub(crate) fn convolve_same_raw(signal: &[f64], coefficients: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let c = (coefficients.len() - 1) / 2;
    let mut out = vec![0.0; n];
    for (t, slot) in out.iter_mut().enumerate() {
        // k = t - u restricted so that u = t - k stays in range.
        let k_lo = t as isize - (n as isize - 1);
        let k_lo = k_lo.max(-(c as isize));
        let k_hi = (t as isize).min(c as isize);
        let mut acc = 0.0;
        let mut k = k_lo;
        while k <= k_hi {
            acc += coefficients[(k + c as isize) as usize] * signal[(t as isize - k) as usize];
            k += 1;
        }
        *slot = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wave(samples: &[f64]) -> Waveform {
        Waveform::new(samples.to_vec(), 16_000).unwrap()
    }

    /// Independent reference: triple loop over output index and filter tap.
    fn brute_force(signal: &[f64], coefficients: &[f64]) -> Vec<f64> {
        let n = signal.len();
        let c = (coefficients.len() - 1) as isize / 2;
        let mut out = vec![0.0; n];
        for t in 0..n as isize {
            for (j, &coef) in coefficients.iter().enumerate() {
                let k = j as isize - c;
                let u = t - k;
                if u >= 0 && u < n as isize {
                    out[t as usize] += coef * signal[u as usize];
                }
            }
        }
        out
    }

    #[test]
    fn dirac_filter_is_exact_identity() {
        let signal = wave(&[1.0, 2.0, 3.0]);
        let dirac = MalafideFilter::dirac(65, 16_000).unwrap();
        let out = convolve_same(&signal, &dirac).unwrap();
        assert_eq!(out.samples(), signal.samples());
    }

    #[test]
    fn leading_edge_truncates() {
        // [1,0,0,0] * [0.5, 1, 0.25]: the 0.5 contribution lands at index -1
        // and is discarded.
        let signal = wave(&[1.0, 0.0, 0.0, 0.0]);
        let filter =
            MalafideFilter::from_coefficients(vec![0.5, 1.0, 0.25], "a", "s", 16_000).unwrap();
        let out = convolve_same(&signal, &filter).unwrap();
        assert_eq!(out.samples(), &[1.0, 0.25, 0.0, 0.0]);
        assert_eq!(
            out.samples(),
            brute_force(signal.samples(), filter.coefficients()).as_slice()
        );
    }

    #[test]
    fn rejects_sample_rate_mismatch() {
        let signal = Waveform::new(vec![1.0, 2.0], 8_000).unwrap();
        let filter = MalafideFilter::dirac(3, 16_000).unwrap();
        let err = convolve_same(&signal, &filter).unwrap_err();
        assert!(err.to_string().contains("sample rate mismatch"));
    }

    #[test]
    fn linearity_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let coeffs: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let mix: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| a * xi + b * yi).collect();
            let lhs = convolve_same_raw(&mix, &coeffs);
            let cx = convolve_same_raw(&x, &coeffs);
            let cy = convolve_same_raw(&y, &coeffs);
            for t in 0..16 {
                assert!((lhs[t] - (a * cx[t] + b * cy[t])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shift_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 48;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coeffs: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = 3usize;
        for shift in [1usize, 3, 9] {
            // Delay with zero fill, keeping length.
            let mut delayed = vec![0.0; n];
            delayed[shift..].copy_from_slice(&x[..n - shift]);
            let conv_then_delay = {
                let y = convolve_same_raw(&x, &coeffs);
                let mut d = vec![0.0; n];
                d[shift..].copy_from_slice(&y[..n - shift]);
                d
            };
            let delay_then_conv = convolve_same_raw(&delayed, &coeffs);
            // Compare away from both boundary regions.
            for t in (shift + c)..(n - c) {
                assert!(
                    (conv_then_delay[t] - delay_then_conv[t]).abs() < 1e-12,
                    "shift {shift}, index {t}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            signal in proptest::collection::vec(-1.0f64..1.0, 1..64),
            half in proptest::collection::vec(-1.0f64..1.0, 1..=4),
            center in -1.0f64..1.0,
        ) {
            // Build an odd-length filter from a half plus centre.
            let mut coeffs = half.clone();
            coeffs.push(center);
            coeffs.extend(half.iter().rev().map(|v| v * 0.5));
            let fast = convolve_same_raw(&signal, &coeffs);
            let slow = brute_force(&signal, &coeffs);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
