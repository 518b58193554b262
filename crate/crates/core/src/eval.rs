//! Evaluation harness wiring corpus, scorer, filter and metrics together:
//! CM EER on Part-2 trials and fused CM+ASV (SASV) evaluation. Shared by
//! the CLI `evaluate` command and the acceptance suite.

use thiserror::Error;

use crate::corpus::{toy_asv_score, Corpus, CorpusError, Partition, Utterance};
use crate::detector::{DetectorError, DifferentiableScorer};
use crate::dsp::{convolve_same, DspError, MalafideFilter, Waveform};
use crate::metrics::{
    compute_eer, compute_sasv_eer, fuse_scores, normalize_scores, MetricsError, ScoreRecord,
    TrialLabel,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("filter targets attack {filter_attack:?} but evaluation asked for {requested:?}")]
    AttackMismatch {
        filter_attack: String,
        requested: String,
    },
    #[error("no Part-2 spoofs found for attack {0:?}")]
    NoSpoofTrials(String),
    #[error("speaker {0:?} has no enrollment audio in the cm-train partition")]
    NoEnrollment(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// CM evaluation on Part-2: bona fide versus (optionally filtered) spoofs.
#[derive(Debug, Clone)]
pub struct CmEvaluation {
    pub eer: f64,
    pub threshold: f64,
    pub bona_scores: Vec<f64>,
    pub spoof_scores: Vec<f64>,
    pub records: Vec<ScoreRecord>,
}

/// Scores Part-2 bona fide audio against Part-2 spoofs of `attack_id`
/// (every attack when `None`), convolving the spoofs with `filter` first
/// when one is given. The filter's attack id must agree with the requested
/// attack.
pub fn evaluate_cm(
    scorer: &dyn DifferentiableScorer,
    corpus: &Corpus,
    attack_id: Option<&str>,
    filter: Option<&MalafideFilter>,
) -> Result<CmEvaluation, EvalError> {
    let effective_attack = match (attack_id, filter) {
        (Some(requested), Some(f)) if f.attack_id() != requested => {
            return Err(EvalError::AttackMismatch {
                filter_attack: f.attack_id().to_string(),
                requested: requested.to_string(),
            });
        }
        (Some(requested), _) => Some(requested.to_string()),
        (None, Some(f)) => Some(f.attack_id().to_string()),
        (None, None) => None,
    };

    let spoofs: Vec<&Utterance> = match &effective_attack {
        Some(attack) => corpus.spoofs(attack, Partition::Part2),
        None => corpus
            .utterances
            .iter()
            .filter(|u| u.partition == Partition::Part2 && u.attack_id.is_some())
            .collect(),
    };
    if spoofs.is_empty() {
        return Err(EvalError::NoSpoofTrials(
            effective_attack.unwrap_or_else(|| "<any>".into()),
        ));
    }

    let mut records = Vec::new();
    let mut bona_scores = Vec::new();
    for u in corpus.bona(Partition::Part2) {
        let score = scorer.score(&u.waveform)?;
        bona_scores.push(score);
        records.push(ScoreRecord {
            trial_id: u.id.clone(),
            label: TrialLabel::Bonafide,
            attack_id: "-".into(),
            score,
        });
    }
    let mut spoof_scores = Vec::new();
    for u in spoofs {
        let audio = match filter {
            Some(f) => convolve_same(&u.waveform, f)?,
            None => u.waveform.clone(),
        };
        let score = scorer.score(&audio)?;
        spoof_scores.push(score);
        records.push(ScoreRecord {
            trial_id: u.id.clone(),
            label: TrialLabel::Spoof,
            attack_id: u.attack_id.clone().unwrap_or_else(|| "-".into()),
            score,
        });
    }

    let (eer, threshold) = compute_eer(&bona_scores, &spoof_scores)?;
    Ok(CmEvaluation {
        eer,
        threshold,
        bona_scores,
        spoof_scores,
        records,
    })
}

/// Fused CM+ASV evaluation: target trials positive, non-target and spoofed
/// trials negative.
#[derive(Debug, Clone)]
pub struct SasvEvaluation {
    pub sasv_eer: f64,
    pub sasv_threshold: f64,
    /// Target-vs-nontarget EER of the raw toy ASV scores, the health check
    /// that the attack is not simply destroying the audio.
    pub asv_eer: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
    pub n_spoof: usize,
    /// Fused scores per trial.
    pub records: Vec<ScoreRecord>,
}

/// Builds SASV trials from Part-2: each bona fide utterance against its own
/// speaker (target) and against `nontarget_per_bona` other speakers
/// (non-target), plus the attack's Part-2 spoofs claiming their source
/// speaker. Spoof audio is filtered when a filter is given; both CM and ASV
/// see the same audio. Enrollment is the claimed speaker's cm-train bona
/// fide audio.
///
/// The CM side of the fusion uses the softmax bona fide probability rather
/// than the raw logit difference: fusion sums scores across systems, so each
/// side must arrive on a calibrated scale or its spread drowns the other.
pub fn evaluate_sasv(
    scorer: &dyn DifferentiableScorer,
    corpus: &Corpus,
    attack_id: &str,
    filter: Option<&MalafideFilter>,
    nontarget_per_bona: usize,
) -> Result<SasvEvaluation, EvalError> {
    if let Some(f) = filter {
        if f.attack_id() != attack_id {
            return Err(EvalError::AttackMismatch {
                filter_attack: f.attack_id().to_string(),
                requested: attack_id.to_string(),
            });
        }
    }

    // Enrollment pools, in speaker catalog order.
    let enrollment: Vec<(String, Vec<Waveform>)> = corpus
        .speakers
        .iter()
        .map(|s| {
            let pool: Vec<Waveform> = corpus
                .bona(Partition::CmTrain)
                .into_iter()
                .filter(|u| u.speaker_id == s.speaker_id)
                .map(|u| u.waveform.clone())
                .collect();
            (s.speaker_id.clone(), pool)
        })
        .collect();
    let enroll_for = |speaker_id: &str| -> Result<&[Waveform], EvalError> {
        let (_, pool) = enrollment
            .iter()
            .find(|(id, _)| id == speaker_id)
            .ok_or_else(|| CorpusError::UnknownSpeaker(speaker_id.to_string()))?;
        if pool.is_empty() {
            return Err(EvalError::NoEnrollment(speaker_id.to_string()));
        }
        Ok(pool)
    };
    let speaker_index = |speaker_id: &str| {
        corpus
            .speakers
            .iter()
            .position(|s| s.speaker_id == speaker_id)
            .expect("speaker ids come from the corpus")
    };

    struct Trial {
        id: String,
        label: TrialLabel,
        attack: String,
        cm: f64,
        asv: f64,
    }
    let mut trials: Vec<Trial> = Vec::new();

    let cm_probability = |audio: &Waveform| -> Result<f64, EvalError> {
        let (ls, lb) = scorer.score_logits(audio)?;
        Ok(normalize_scores(ls, lb))
    };

    for u in corpus.bona(Partition::Part2) {
        let cm = cm_probability(&u.waveform)?;
        let own = enroll_for(&u.speaker_id)?;
        trials.push(Trial {
            id: format!("t-{}", u.id),
            label: TrialLabel::Target,
            attack: "-".into(),
            cm,
            asv: toy_asv_score(own, &u.waveform)?,
        });
        let base = speaker_index(&u.speaker_id);
        for k in 1..=nontarget_per_bona.min(corpus.speakers.len() - 1) {
            let claimed = &corpus.speakers[(base + k) % corpus.speakers.len()];
            let pool = enroll_for(&claimed.speaker_id)?;
            trials.push(Trial {
                id: format!("nt-{}-{k}", u.id),
                label: TrialLabel::Nontarget,
                attack: "-".into(),
                cm,
                asv: toy_asv_score(pool, &u.waveform)?,
            });
        }
    }

    let spoofs = corpus.spoofs(attack_id, Partition::Part2);
    if spoofs.is_empty() {
        return Err(EvalError::NoSpoofTrials(attack_id.to_string()));
    }
    for u in spoofs {
        let audio = match filter {
            Some(f) => convolve_same(&u.waveform, f)?,
            None => u.waveform.clone(),
        };
        let pool = enroll_for(&u.speaker_id)?;
        trials.push(Trial {
            id: format!("sp-{}", u.id),
            label: TrialLabel::Spoof,
            attack: attack_id.to_string(),
            cm: cm_probability(&audio)?,
            asv: toy_asv_score(pool, &audio)?,
        });
    }

    let cm_scores: Vec<f64> = trials.iter().map(|t| t.cm).collect();
    let asv_scores: Vec<f64> = trials.iter().map(|t| t.asv).collect();
    let fused = fuse_scores(&cm_scores, &asv_scores)?;

    let collect = |label: TrialLabel, values: &[f64]| -> Vec<f64> {
        trials
            .iter()
            .zip(values)
            .filter(|(t, _)| t.label == label)
            .map(|(_, &v)| v)
            .collect()
    };
    let target_fused = collect(TrialLabel::Target, &fused);
    let nontarget_fused = collect(TrialLabel::Nontarget, &fused);
    let spoof_fused = collect(TrialLabel::Spoof, &fused);
    let (sasv_eer, sasv_threshold) =
        compute_sasv_eer(&target_fused, &nontarget_fused, &spoof_fused)?;

    let target_asv = collect(TrialLabel::Target, &asv_scores);
    let nontarget_asv = collect(TrialLabel::Nontarget, &asv_scores);
    let (asv_eer, _) = compute_eer(&target_asv, &nontarget_asv)?;

    let records: Vec<ScoreRecord> = trials
        .iter()
        .zip(&fused)
        .map(|(t, &score)| ScoreRecord {
            trial_id: t.id.clone(),
            label: t.label,
            attack_id: t.attack.clone(),
            score,
        })
        .collect();

    Ok(SasvEvaluation {
        sasv_eer,
        sasv_threshold,
        asv_eer,
        n_target: target_fused.len(),
        n_nontarget: nontarget_fused.len(),
        n_spoof: spoof_fused.len(),
        records,
    })
}
