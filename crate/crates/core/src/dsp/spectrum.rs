//! Normalised magnitude frequency response of a filter.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{DspError, MalafideFilter};

/// Magnitude response sampled on `[0, sample_rate / 2]`, in dB, shifted so
/// the peak bin sits at 0 dB. Bins where the response is exactly zero come
/// out as `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub frequencies_hz: Vec<f64>,
    pub magnitude_db: Vec<f64>,
    pub n_fft: usize,
}

/// Computes the normalised magnitude response of `filter` via an `n_fft`
/// point DFT of the zero-padded coefficient vector.
///
/// `n_fft` must be a power of two and at least the filter length.
pub fn frequency_response(
    filter: &MalafideFilter,
    n_fft: usize,
) -> Result<FrequencyResponse, DspError> {
    if n_fft < filter.len() || !n_fft.is_power_of_two() {
        return Err(DspError::InvalidFftSize {
            n_fft,
            filter_len: filter.len(),
        });
    }
    if filter.coefficients().iter().all(|&c| c == 0.0) {
        return Err(DspError::AllZeroFilter);
    }

    let mut buf: Vec<Complex<f64>> = filter
        .coefficients()
        .iter()
        .map(|&c| Complex::new(c, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n_fft)
        .collect();
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);

    let n_bins = n_fft / 2 + 1;
    let sample_rate = filter.sample_rate() as f64;
    let frequencies_hz: Vec<f64> = (0..n_bins)
        .map(|i| i as f64 * sample_rate / n_fft as f64)
        .collect();
    let mut magnitude_db: Vec<f64> = buf[..n_bins]
        .iter()
        .map(|z| 20.0 * z.norm().log10())
        .collect();
    let peak = magnitude_db
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    for m in &mut magnitude_db {
        *m -= peak;
    }

    Ok(FrequencyResponse {
        frequencies_hz,
        magnitude_db,
        n_fft,
    })
}

impl FrequencyResponse {
    /// Index of the bin closest to `frequency_hz`.
    pub fn nearest_bin(&self, frequency_hz: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, &f) in self.frequencies_hz.iter().enumerate() {
            let d = (f - frequency_hz).abs();
            if d < best_dist {
                best_dist = d;
                best = i;
            }
        }
        best
    }

    /// Median of the magnitude bins; `-inf` bins participate and sort first.
    pub fn median_magnitude_db(&self) -> f64 {
        let mut sorted = self.magnitude_db.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("dB values are never NaN"));
        let n = sorted.len();
        if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        }
    }
}
