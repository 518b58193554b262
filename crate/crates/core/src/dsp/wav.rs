//! Minimal RIFF/WAVE reader and writer for 16-bit PCM mono files.
//!
//! Samples are clipped to [-1, 1] and quantized with scale 32767 on write,
//! so a write/read round trip reproduces each sample within 1/32768.

use std::path::Path;

use super::{DspError, Waveform};

const PCM_FORMAT: u16 = 1;
const BITS_PER_SAMPLE: u16 = 16;
const QUANT_SCALE: f64 = 32_767.0;

/// Encodes a waveform as a 16-bit PCM mono WAV byte stream.
pub fn encode_wav(waveform: &Waveform) -> Vec<u8> {
    let n = waveform.len();
    let data_size = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM_FORMAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&waveform.sample_rate().to_le_bytes());
    let byte_rate = waveform.sample_rate() * 2;
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&BITS_PER_SAMPLE.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in waveform.samples() {
        let clipped = s.clamp(-1.0, 1.0);
        let q = (clipped * QUANT_SCALE).round() as i32;
        let q = q.clamp(i16::MIN as i32, i16::MAX as i32) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

/// Decodes a 16-bit PCM mono WAV byte stream.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform, DspError> {
    let fail = |msg: String| Err(DspError::WavFormat(msg));

    if bytes.len() < 12 {
        return fail("file too short for a RIFF header".into());
    }
    if &bytes[0..4] != b"RIFF" {
        return fail("missing RIFF magic".into());
    }
    if &bytes[8..12] != b"WAVE" {
        return fail("missing WAVE form type".into());
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start + size;
        if body_end > bytes.len() {
            return fail(format!(
                "chunk {:?} declares {size} bytes past end of file",
                String::from_utf8_lossy(id)
            ));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return fail(format!("fmt chunk too short: {size} bytes"));
                }
                let audio_format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let sample_rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((audio_format, channels, sample_rate, bits));
            }
            b"data" => data = Some(body),
            _ => {} // skip LIST, fact, etc.
        }
        // Chunks are word aligned; odd sizes carry a pad byte.
        pos = body_end + (size % 2);
    }

    let (audio_format, channels, sample_rate, bits) = match fmt {
        Some(f) => f,
        None => return fail("missing fmt chunk".into()),
    };
    if audio_format != PCM_FORMAT {
        return fail(format!(
            "unsupported audio format {audio_format} (only PCM = 1)"
        ));
    }
    if channels != 1 {
        return fail(format!("unsupported channel count {channels} (only mono)"));
    }
    if bits != BITS_PER_SAMPLE {
        return fail(format!("unsupported bit depth {bits} (only 16)"));
    }
    let data = match data {
        Some(d) => d,
        None => return fail("missing data chunk".into()),
    };
    if data.len() % 2 != 0 {
        return fail(format!("data chunk has odd byte count {}", data.len()));
    }
    if data.is_empty() {
        return fail("data chunk is empty".into());
    }

    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / QUANT_SCALE)
        .collect();
    Waveform::new(samples, sample_rate)
}

pub fn write_wav(path: &Path, waveform: &Waveform) -> Result<(), DspError> {
    std::fs::write(path, encode_wav(waveform)).map_err(|e| DspError::io(path, e))
}

pub fn read_wav(path: &Path) -> Result<Waveform, DspError> {
    let bytes = std::fs::read(path).map_err(|e| DspError::io(path, e))?;
    decode_wav(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(n: usize, rate: u32, freq: f64) -> Waveform {
        let samples: Vec<f64> = (0..n)
            .map(|i| 0.7 * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        Waveform::new(samples, rate).unwrap()
    }

    #[test]
    fn round_trip_within_quantization_bound() {
        let w = sine(160, 16_000, 1_000.0);
        let back = decode_wav(&encode_wav(&w)).unwrap();
        assert_eq!(back.sample_rate(), 16_000);
        assert_eq!(back.len(), 160);
        for (a, b) in w.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 32_768.0, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_waveform_round_trips_exactly() {
        let w = Waveform::new(vec![0.0; 64], 16_000).unwrap();
        let back = decode_wav(&encode_wav(&w)).unwrap();
        assert_eq!(back.samples(), w.samples());
    }

    #[test]
    fn out_of_range_samples_are_clipped() {
        let w = Waveform::new(vec![2.0, -3.0, 1.0, -1.0], 16_000).unwrap();
        let back = decode_wav(&encode_wav(&w)).unwrap();
        assert_eq!(back.samples()[0], 1.0);
        assert_eq!(back.samples()[1], -1.0);
        assert_eq!(back.samples()[3], -1.0);
    }

    #[test]
    fn rejects_stereo() {
        let mut bytes = encode_wav(&sine(8, 16_000, 440.0));
        bytes[22] = 2; // channel count field
        let err = decode_wav(&bytes).unwrap_err();
        assert!(
            err.to_string().contains("unsupported channel count 2"),
            "{err}"
        );
    }

    #[test]
    fn rejects_non_pcm() {
        let mut bytes = encode_wav(&sine(8, 16_000, 440.0));
        bytes[20] = 3; // IEEE float format tag
        let err = decode_wav(&bytes).unwrap_err();
        assert!(err.to_string().contains("unsupported audio format 3"));
    }

    #[test]
    fn rejects_truncated_header() {
        let err = decode_wav(b"RIFFxxxx").unwrap_err();
        assert!(err.to_string().contains("too short"));
    }

    #[test]
    fn skips_extra_chunks() {
        // Insert a LIST chunk between fmt and data.
        let w = sine(4, 16_000, 440.0);
        let encoded = encode_wav(&w);
        let mut bytes = encoded[..36].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(b"INFO");
        bytes.extend_from_slice(&encoded[36..]);
        let riff_size = (bytes.len() - 8) as u32;
        bytes[4..8].copy_from_slice(&riff_size.to_le_bytes());
        let back = decode_wav(&bytes).unwrap();
        assert_eq!(back.len(), 4);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        let w = sine(160, 16_000, 500.0);
        write_wav(&path, &w).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.len(), w.len());
    }
}
