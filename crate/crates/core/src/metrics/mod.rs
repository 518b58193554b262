//! Score normalisation, attack success rate, EER, score-level fusion and
//! SASV-EER. Higher scores always mean "more bona fide" / "more target".

mod io;

pub use io::{
    read_score_csv, write_score_csv, MetricReport, ScoreRecord, TrialLabel,
};

use thiserror::Error;

use crate::detector::DifferentiableScorer;
use crate::dsp::{convolve_same, DspError, MalafideFilter, Waveform};

/// Errors raised by metric computations.
#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metric requires a non-empty {0} class")]
    EmptyClass(&'static str),
    #[error("score vectors must align: {left} vs {right} entries")]
    LengthMismatch { left: usize, right: usize },
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("scorer: {0}")]
    Scorer(String),
    #[error("score file: {0}")]
    ScoreFile(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Labeled score collections feeding EER and SASV-EER.
///
/// `bona_scores`/`spoof_scores` drive CM evaluation; `target_scores`,
/// `nontarget_scores` and `spoof_trial_scores` drive SASV evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialScores {
    pub bona_scores: Vec<f64>,
    pub spoof_scores: Vec<f64>,
    pub target_scores: Vec<f64>,
    pub nontarget_scores: Vec<f64>,
    pub spoof_trial_scores: Vec<f64>,
}

/// Softmax probability of the bona fide class, computed in the
/// max-subtracted form so extreme logits cannot overflow.
pub fn normalize_scores(logit_spoof: f64, logit_bonafide: f64) -> f64 {
    let m = logit_spoof.max(logit_bonafide);
    let es = (logit_spoof - m).exp();
    let eb = (logit_bonafide - m).exp();
    eb / (eb + es)
}

/// Fraction of spoofed utterances whose softmax-normalised filtered score
/// strictly exceeds 0.5, i.e. that the CM considers more likely bona fide
/// than spoofed.
pub fn success_rate(
    scorer: &dyn DifferentiableScorer,
    filter: &MalafideFilter,
    spoofs: &[Waveform],
) -> Result<f64, MetricsError> {
    if spoofs.is_empty() {
        return Err(MetricsError::EmptyClass("spoof"));
    }
    let mut successes = 0usize;
    for spoof in spoofs {
        let filtered = convolve_same(spoof, filter)?;
        let (ls, lb) = scorer
            .score_logits(&filtered)
            .map_err(|e| MetricsError::Scorer(e.to_string()))?;
        if normalize_scores(ls, lb) > 0.5 {
            successes += 1;
        }
    }
    Ok(successes as f64 / spoofs.len() as f64)
}

fn validate_finite(scores: &[f64]) -> Result<(), MetricsError> {
    match scores.iter().position(|s| !s.is_finite()) {
        Some(i) => Err(MetricsError::NonFiniteScore(i)),
        None => Ok(()),
    }
}

/// Equal error rate of `positive` (higher is better) against `negative`
/// scores, with the operating threshold at which it is attained.
///
/// All candidate thresholds (the sorted distinct scores, the midpoints
/// between adjacent distinct scores, and sentinels beyond both ends) are
/// swept. The false-acceptance rate at a threshold is the fraction of
/// negatives at or above it, the false-rejection rate the fraction of
/// positives below it. FAR - FRR is non-increasing in the threshold, so it
/// crosses zero once; the rate is linearly interpolated between the two
/// adjacent operating points around the crossing.
pub fn compute_eer(positive: &[f64], negative: &[f64]) -> Result<(f64, f64), MetricsError> {
    if positive.is_empty() {
        return Err(MetricsError::EmptyClass("positive"));
    }
    if negative.is_empty() {
        return Err(MetricsError::EmptyClass("negative"));
    }
    validate_finite(positive)?;
    validate_finite(negative)?;

    let thresholds = candidate_thresholds(positive, negative);
    let mut prev: Option<(f64, f64, f64)> = None; // (theta, far, frr)
    for &theta in &thresholds {
        let (far, frr) = operating_point(positive, negative, theta);
        let diff = far - frr;
        if diff == 0.0 {
            return Ok((far, theta));
        }
        if diff < 0.0 {
            let (p_theta, p_far, p_frr) = prev.expect("sweep starts at FAR 1, FRR 0");
            let p_diff = p_far - p_frr;
            let t = p_diff / (p_diff - diff);
            let eer = p_far + t * (far - p_far);
            let threshold = p_theta + t * (theta - p_theta);
            return Ok((eer, threshold));
        }
        prev = Some((theta, far, frr));
    }
    // diff stays positive only if the tail sentinel were missing.
    unreachable!("threshold sweep always reaches FAR 0, FRR 1");
}

/// Sorted distinct scores of both classes, plus midpoints between adjacent
/// distinct values, plus sentinels below the minimum and above the maximum.
fn candidate_thresholds(positive: &[f64], negative: &[f64]) -> Vec<f64> {
    let mut scores: Vec<f64> = positive.iter().chain(negative).copied().collect();
    scores.sort_by(|a, b| a.partial_cmp(b).expect("scores validated finite"));
    scores.dedup();
    let mut thresholds = Vec::with_capacity(scores.len() * 2 + 2);
    thresholds.push(scores[0] - 1.0);
    for i in 0..scores.len() {
        thresholds.push(scores[i]);
        if i + 1 < scores.len() {
            thresholds.push(0.5 * (scores[i] + scores[i + 1]));
        }
    }
    thresholds.push(scores[scores.len() - 1] + 1.0);
    thresholds
}

fn operating_point(positive: &[f64], negative: &[f64], theta: f64) -> (f64, f64) {
    let far = negative.iter().filter(|&&s| s >= theta).count() as f64 / negative.len() as f64;
    let frr = positive.iter().filter(|&&s| s < theta).count() as f64 / positive.len() as f64;
    (far, frr)
}

/// Equal-weight score-level fusion after per-system min-max normalisation
/// over the full trial set.
///
/// A degenerate system (all scores equal) contributes a constant 0.5 and a
/// warning is logged; the fused ranking then follows the other system.
pub fn fuse_scores(cm_scores: &[f64], asv_scores: &[f64]) -> Result<Vec<f64>, MetricsError> {
    fuse_scores_weighted(cm_scores, asv_scores, 1.0, 1.0)
}

/// [`fuse_scores`] with configurable per-system weights.
pub fn fuse_scores_weighted(
    cm_scores: &[f64],
    asv_scores: &[f64],
    cm_weight: f64,
    asv_weight: f64,
) -> Result<Vec<f64>, MetricsError> {
    if cm_scores.len() != asv_scores.len() {
        return Err(MetricsError::LengthMismatch {
            left: cm_scores.len(),
            right: asv_scores.len(),
        });
    }
    if cm_scores.is_empty() {
        return Err(MetricsError::EmptyClass("trial"));
    }
    validate_finite(cm_scores)?;
    validate_finite(asv_scores)?;
    let cm_norm = min_max_normalize(cm_scores, "cm");
    let asv_norm = min_max_normalize(asv_scores, "asv");
    Ok(cm_norm
        .iter()
        .zip(&asv_norm)
        .map(|(c, a)| cm_weight * c + asv_weight * a)
        .collect())
}

fn min_max_normalize(scores: &[f64], system: &str) -> Vec<f64> {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        log::warn!("{system} scores are all equal ({min}); system contributes a constant 0.5");
        return vec![0.5; scores.len()];
    }
    scores.iter().map(|s| (s - min) / (max - min)).collect()
}

/// SASV equal error rate: target trials are the positive class, non-target
/// and spoofed trials together the negative class.
pub fn compute_sasv_eer(
    target_fused: &[f64],
    nontarget_fused: &[f64],
    spoof_fused: &[f64],
) -> Result<(f64, f64), MetricsError> {
    if target_fused.is_empty() {
        return Err(MetricsError::EmptyClass("target"));
    }
    if nontarget_fused.is_empty() && spoof_fused.is_empty() {
        return Err(MetricsError::EmptyClass("non-target or spoof"));
    }
    let negatives: Vec<f64> = nontarget_fused
        .iter()
        .chain(spoof_fused)
        .copied()
        .collect();
    compute_eer(target_fused, &negatives)
}
