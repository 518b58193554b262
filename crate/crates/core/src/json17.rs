//! JSON emission with fixed 17-significant-digit floats.
//!
//! Filter and model files carry coefficient vectors that must round-trip
//! bit-exactly at double precision and byte-identically across reruns.
//! 17 significant decimal digits are sufficient to reconstruct any finite
//! `f64` exactly, and a fixed width keeps the emitted bytes stable, unlike
//! shortest-representation printing.

use std::fmt::Write;

/// Appends a JSON array of numbers formatted with exactly 17 significant
/// digits (e.g. `1.0000000000000000e0`) to `out`; each entry parses back to
/// the identical bit pattern.
pub fn push_f64_array(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        debug_assert!(v.is_finite(), "only finite values are serializable");
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v:.16e}");
    }
    out.push(']');
}

/// Appends a JSON string literal (with escaping) to `out`.
pub fn push_str(out: &mut String, value: &str) {
    // serde_json performs the escaping; the value is embedded verbatim.
    out.push_str(&serde_json::to_string(value).expect("string serialization is infallible"));
}
