//! Time-domain signal representation, non-causal convolution, spectral
//! analysis of filters, and WAV file I/O.
//!
//! Everything here is double precision; quantization happens only at the WAV
//! boundary. All types are immutable after construction and all operations
//! are pure functions.

mod convolve;
mod filter;
mod spectrum;
mod waveform;
mod wav;

pub use convolve::convolve_same;
pub use filter::{MalafideFilter, FILTER_LENGTH_CATALOG};
pub use spectrum::{frequency_response, FrequencyResponse};
pub use waveform::Waveform;
pub use wav::{decode_wav, encode_wav, read_wav, write_wav};

use thiserror::Error;

/// Errors raised by signal and filter operations.
#[derive(Debug, Error)]
pub enum DspError {
    #[error("waveform must contain at least one sample")]
    EmptyWaveform,
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("non-finite filter coefficient at index {0}")]
    NonFiniteCoefficient(usize),
    #[error("filter length must be odd and >= 3, got {0}")]
    InvalidFilterLength(usize),
    #[error("filter length must be odd and in catalog {FILTER_LENGTH_CATALOG:?}, got {0}")]
    NonCatalogLength(usize),
    #[error("sample rate mismatch: signal is {signal_hz} Hz but filter is {filter_hz} Hz")]
    SampleRateMismatch { signal_hz: u32, filter_hz: u32 },
    #[error("n_fft must be a power of two >= filter length {filter_len}, got {n_fft}")]
    InvalidFftSize { n_fft: usize, filter_len: usize },
    #[error("all-zero filter has no normalisable frequency response")]
    AllZeroFilter,
    #[error("filter centre coefficient must be exactly 1 for serialization, got {0}")]
    UnprojectedFilter(f64),
    #[error("filter file: {0}")]
    FilterFormat(String),
    #[error("wav: {0}")]
    WavFormat(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DspError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        DspError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
