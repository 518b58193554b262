//! Run configuration: one structured TOML file plus per-command flag
//! overrides. Every command writes the exact resolved config it ran with
//! into the run directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use malafide_core::corpus::ProtocolConfig;
use malafide_core::detector::{CmVariant, TrainConfig};
use malafide_core::dsp::FILTER_LENGTH_CATALOG;
use malafide_core::AttackConfig;

use crate::error::CliError;

/// CM training parameters as they appear in the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmTrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub eer_threshold: f64,
}

impl Default for CmTrainingSection {
    fn default() -> Self {
        CmTrainingSection {
            epochs: 40,
            batch_size: 16,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            eer_threshold: 0.05,
        }
    }
}

/// Filter optimisation parameters as they appear in the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    /// Lengths to optimise; each must come from the catalog.
    pub lengths: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            lengths: vec![65, 257, 1025],
            epochs: 30,
            batch_size: 14,
            learning_rate: 1e-2,
            weight_decay: 1e-4,
        }
    }
}

/// Evaluation parameters as they appear in the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// FFT size for filter spectrum analysis.
    pub nfft: usize,
    /// Non-target trials per Part-2 bona fide utterance.
    pub nontarget_per_bona: usize,
    /// Filter length the SASV report defaults to.
    pub sasv_filter_length: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            nfft: 8_192,
            nontarget_per_bona: 3,
            sasv_filter_length: 257,
        }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub corpus: ProtocolConfig,
    pub cm_training: CmTrainingSection,
    pub attack: AttackSection,
    pub evaluation: EvaluationSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    /// CM training config for one variant. The two variants use distinct
    /// seeds so black-box transfer tests see independently initialised CMs.
    pub fn train_config(&self, variant: CmVariant, seed_override: Option<u64>) -> TrainConfig {
        let base = seed_override.unwrap_or(self.master_seed);
        let seed = match variant {
            CmVariant::A => base,
            CmVariant::B => base.wrapping_add(1),
        };
        let defender_bona = self.corpus.bona_cm_train + self.corpus.bona_cm_dev;
        TrainConfig {
            variant,
            epochs: self.cm_training.epochs,
            batch_size: self.cm_training.batch_size,
            learning_rate: self.cm_training.learning_rate,
            weight_decay: self.cm_training.weight_decay,
            holdout_fraction: self.corpus.bona_cm_dev as f64 / defender_bona as f64,
            eer_threshold: self.cm_training.eer_threshold,
            seed,
        }
    }

    pub fn attack_config(&self, length: usize, seed_override: Option<u64>) -> AttackConfig {
        AttackConfig {
            filter_length: length,
            epochs: self.attack.epochs,
            batch_size: self.attack.batch_size,
            learning_rate: self.attack.learning_rate,
            weight_decay: self.attack.weight_decay,
            rng_seed: seed_override.unwrap_or(self.master_seed),
            ..AttackConfig::default()
        }
    }

    pub fn validate_lengths(lengths: &[usize]) -> Result<(), CliError> {
        if lengths.is_empty() {
            return Err(CliError::Validation(
                "at least one filter length is required".into(),
            ));
        }
        for &l in lengths {
            if !FILTER_LENGTH_CATALOG.contains(&l) {
                return Err(CliError::Validation(format!(
                    "filter length must be odd and in catalog {FILTER_LENGTH_CATALOG:?}, got {l}"
                )));
            }
        }
        Ok(())
    }
}

/// Well-known paths inside a run directory.
pub struct RunPaths {
    pub run_dir: PathBuf,
}

impl RunPaths {
    pub fn new(run_dir: impl Into<PathBuf>) -> Self {
        RunPaths {
            run_dir: run_dir.into(),
        }
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.run_dir.join("corpus")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.run_dir.join("models")
    }

    pub fn filters_dir(&self) -> PathBuf {
        self.run_dir.join("filters")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.run_dir.join("eval")
    }

    pub fn analysis_dir(&self) -> PathBuf {
        self.run_dir.join("analysis")
    }

    pub fn resolved_dir(&self) -> PathBuf {
        self.run_dir.join("resolved")
    }

    pub fn model_file(&self, variant: CmVariant) -> PathBuf {
        self.models_dir().join(format!("{}.json", variant.scorer_id()))
    }
}

/// Writes `<run_dir>/resolved/<command>.toml`: the exact configuration a
/// command ran with, plus the command line that produced it.
pub fn write_resolved_config(
    paths: &RunPaths,
    command: &str,
    config: &RunConfig,
    argv: &[String],
) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Resolved<'a> {
        command: &'a str,
        argv: &'a [String],
        #[serde(flatten)]
        config: &'a RunConfig,
    }
    let text = toml::to_string_pretty(&Resolved {
        command,
        argv,
        config,
    })
    .map_err(|e| CliError::Runtime(format!("cannot serialize resolved config: {e}")))?;
    let dir = paths.resolved_dir();
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    crate::util::write_atomic(&dir.join(format!("{command}.toml")), text.as_bytes())
}
