//! The adversarial FIR filter: an odd-length, non-causal coefficient vector
//! whose centre tap is pinned to 1 whenever the filter is in projected state.

use std::path::Path;

use serde::Deserialize;

use super::DspError;
use crate::json17;

/// Filter lengths explored by the attack, each 2^k + 1 so that a centre tap
/// exists and lengths double roughly per step.
pub const FILTER_LENGTH_CATALOG: [usize; 7] = [65, 129, 257, 513, 1025, 2049, 4097];

const FILTER_FORMAT_VERSION: u32 = 1;

/// An odd-length, non-causal LTI filter targeting one spoofing attack,
/// optimised against one scorer.
///
/// The centre coefficient equals exactly 1 in "projected" state, which holds
/// after initialisation, after every optimiser update and in serialized form.
/// [`crate::attack::project_dirac`] restores the projected state.
#[derive(Debug, Clone, PartialEq)]
pub struct MalafideFilter {
    coefficients: Vec<f64>,
    attack_id: String,
    scorer_id: String,
    sample_rate: u32,
}

impl MalafideFilter {
    /// Builds a filter from raw coefficients. The length must be odd and at
    /// least 3 and every coefficient finite; the centre is NOT required to be
    /// 1 here, since mid-update filters pass through this state.
    pub fn from_coefficients(
        coefficients: Vec<f64>,
        attack_id: impl Into<String>,
        scorer_id: impl Into<String>,
        sample_rate: u32,
    ) -> Result<Self, DspError> {
        if coefficients.len() < 3 || coefficients.len() % 2 == 0 {
            return Err(DspError::InvalidFilterLength(coefficients.len()));
        }
        if sample_rate == 0 {
            return Err(DspError::ZeroSampleRate);
        }
        if let Some(i) = coefficients.iter().position(|c| !c.is_finite()) {
            return Err(DspError::NonFiniteCoefficient(i));
        }
        Ok(MalafideFilter {
            coefficients,
            attack_id: attack_id.into(),
            scorer_id: scorer_id.into(),
            sample_rate,
        })
    }

    /// The convolutive identity: centre tap 1, all other taps 0.
    pub fn dirac(length: usize, sample_rate: u32) -> Result<Self, DspError> {
        let mut coefficients = vec![0.0; length];
        if length >= 3 && length % 2 == 1 {
            coefficients[(length - 1) / 2] = 1.0;
        }
        Self::from_coefficients(coefficients, "-", "-", sample_rate)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the t = 0 tap.
    pub fn center(&self) -> usize {
        (self.coefficients.len() - 1) / 2
    }

    pub fn attack_id(&self) -> &str {
        &self.attack_id
    }

    pub fn scorer_id(&self) -> &str {
        &self.scorer_id
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// True when the centre coefficient is exactly 1.
    pub fn is_projected(&self) -> bool {
        self.coefficients[self.center()] == 1.0
    }

    pub fn is_catalog_length(length: usize) -> bool {
        FILTER_LENGTH_CATALOG.contains(&length)
    }

    pub(crate) fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub(crate) fn set_identity(&mut self, attack_id: String, scorer_id: String) {
        self.attack_id = attack_id;
        self.scorer_id = scorer_id;
    }

    /// Serializes to the filter JSON format. Coefficients are written with 17
    /// significant digits so the round trip is bit-exact at double precision.
    /// Only projected filters may be serialized.
    pub fn to_json(&self) -> Result<String, DspError> {
        let center_value = self.coefficients[self.center()];
        if center_value != 1.0 {
            return Err(DspError::UnprojectedFilter(center_value));
        }
        let mut out = String::with_capacity(64 + 24 * self.coefficients.len());
        out.push_str("{\"format_version\":");
        out.push_str(&FILTER_FORMAT_VERSION.to_string());
        out.push_str(",\"length\":");
        out.push_str(&self.coefficients.len().to_string());
        out.push_str(",\"sample_rate\":");
        out.push_str(&self.sample_rate.to_string());
        out.push_str(",\"attack_id\":");
        json17::push_str(&mut out, &self.attack_id);
        out.push_str(",\"scorer_id\":");
        json17::push_str(&mut out, &self.scorer_id);
        out.push_str(",\"coefficients\":");
        json17::push_f64_array(&mut out, &self.coefficients);
        out.push_str("}\n");
        Ok(out)
    }

    /// Parses and validates the filter JSON format.
    pub fn from_json(text: &str) -> Result<Self, DspError> {
        #[derive(Deserialize)]
        struct FilterFile {
            format_version: u32,
            length: usize,
            sample_rate: u32,
            attack_id: String,
            scorer_id: String,
            coefficients: Vec<f64>,
        }

        let raw: FilterFile =
            serde_json::from_str(text).map_err(|e| DspError::FilterFormat(e.to_string()))?;
        if raw.format_version != FILTER_FORMAT_VERSION {
            return Err(DspError::FilterFormat(format!(
                "unsupported format_version {} (expected {FILTER_FORMAT_VERSION})",
                raw.format_version
            )));
        }
        if raw.length != raw.coefficients.len() {
            return Err(DspError::FilterFormat(format!(
                "declared length {} does not match {} coefficients",
                raw.length,
                raw.coefficients.len()
            )));
        }
        let filter = Self::from_coefficients(
            raw.coefficients,
            raw.attack_id,
            raw.scorer_id,
            raw.sample_rate,
        )?;
        if !filter.is_projected() {
            return Err(DspError::UnprojectedFilter(
                filter.coefficients[filter.center()],
            ));
        }
        Ok(filter)
    }

    pub fn save(&self, path: &Path) -> Result<(), DspError> {
        let json = self.to_json()?;
        std::fs::write(path, json).map_err(|e| DspError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, DspError> {
        let text = std::fs::read_to_string(path).map_err(|e| DspError::io(path, e))?;
        Self::from_json(&text)
    }
}
