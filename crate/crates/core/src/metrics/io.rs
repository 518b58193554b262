//! Score CSV files and metric report JSON.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Trial class labels in score files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialLabel {
    Bonafide,
    Spoof,
    Target,
    Nontarget,
}

impl TrialLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialLabel::Bonafide => "bonafide",
            TrialLabel::Spoof => "spoof",
            TrialLabel::Target => "target",
            TrialLabel::Nontarget => "nontarget",
        }
    }
}

/// One row of a score file: `(trial_id, label, attack_id or "-", score)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub trial_id: String,
    pub label: TrialLabel,
    pub attack_id: String,
    pub score: f64,
}

pub fn write_score_csv(path: &Path, records: &[ScoreRecord]) -> Result<(), MetricsError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| MetricsError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    for r in records {
        writer.serialize(r).map_err(|e| MetricsError::ScoreFile(e.to_string()))?;
    }
    writer.flush().map_err(|e| MetricsError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn read_score_csv(path: &Path) -> Result<Vec<ScoreRecord>, MetricsError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| MetricsError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| MetricsError::ScoreFile(e.to_string())))
        .collect()
}

/// A metric value with the operating threshold and per-class trial counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
    /// Class name -> trial count; ordered map keeps the JSON bytes stable.
    pub n_trials: BTreeMap<String, usize>,
}

impl MetricReport {
    pub fn new(
        metric: impl Into<String>,
        value: f64,
        threshold: f64,
        counts: &[(&str, usize)],
    ) -> Self {
        MetricReport {
            metric: metric.into(),
            value,
            threshold,
            n_trials: counts
                .iter()
                .map(|(name, n)| (name.to_string(), *n))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let records = vec![
            ScoreRecord {
                trial_id: "b0001".into(),
                label: TrialLabel::Bonafide,
                attack_id: "-".into(),
                score: 1.25,
            },
            ScoreRecord {
                trial_id: "s-SA1-0001".into(),
                label: TrialLabel::Spoof,
                attack_id: "SA1".into(),
                score: -0.5,
            },
        ];
        write_score_csv(&path, &records).unwrap();
        let back = read_score_csv(&path).unwrap();
        assert_eq!(back, records);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("trial_id,label,attack_id,score\n"));
    }

    #[test]
    fn report_json_is_stable() {
        let report = MetricReport::new("cm-eer", 0.042, 0.17, &[("bonafide", 40), ("spoof", 80)]);
        let json = serde_json::to_string(&report).unwrap();
        assert_eq!(
            json,
            r#"{"metric":"cm-eer","value":0.042,"threshold":0.17,"n_trials":{"bonafide":40,"spoof":80}}"#
        );
    }
}
