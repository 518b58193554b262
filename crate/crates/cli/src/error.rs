//! CLI error classification: exit code 1 for validation problems (bad
//! arguments, malformed inputs, violated preconditions), 2 for runtime and
//! numerical failures.

use malafide_core::attack::AttackError;
use malafide_core::corpus::CorpusError;
use malafide_core::detector::DetectorError;
use malafide_core::dsp::DspError;
use malafide_core::eval::EvalError;
use malafide_core::metrics::MetricsError;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<DspError> for CliError {
    fn from(e: DspError) -> Self {
        match e {
            DspError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<DetectorError> for CliError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::Io { .. } | DetectorError::Metric(_) => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<AttackError> for CliError {
    fn from(e: AttackError) -> Self {
        match e {
            AttackError::NonFiniteGradient { .. }
            | AttackError::NonFiniteObjective { .. }
            | AttackError::Scorer(_)
            | AttackError::Metrics(_) => CliError::Runtime(e.to_string()),
            AttackError::Dsp(inner) => CliError::from(inner),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::Runtime(e.to_string()),
            CorpusError::Dsp(inner) => CliError::from(inner),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io { .. } | MetricsError::NonFiniteScore(_) => {
                CliError::Runtime(e.to_string())
            }
            MetricsError::Dsp(inner) => CliError::from(inner),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Corpus(inner) => CliError::from(inner),
            EvalError::Detector(inner) => CliError::from(inner),
            EvalError::Dsp(inner) => CliError::from(inner),
            EvalError::Metrics(inner) => CliError::from(inner),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
