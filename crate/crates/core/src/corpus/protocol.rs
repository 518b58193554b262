//! Corpus construction: defender partition (CM training and development)
//! and attacker partition (Part-1 for filter optimisation, Part-2 for
//! universality testing), with disjoint utterance ids throughout.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synth::{generate_bonafide, generate_spoof};
use super::{mix_seed, CorpusError, SpeakerSpec, SpoofAttackSpec};
use crate::dsp::{read_wav, write_wav, Waveform};

/// Utterance class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Bonafide,
    Spoof,
}

/// Which realm and split an utterance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Partition {
    #[serde(rename = "cm-train")]
    CmTrain,
    #[serde(rename = "cm-dev")]
    CmDev,
    #[serde(rename = "part1")]
    Part1,
    #[serde(rename = "part2")]
    Part2,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::CmTrain => "cm-train",
            Partition::CmDev => "cm-dev",
            Partition::Part1 => "part1",
            Partition::Part2 => "part2",
        }
    }
}

/// One utterance with its audio and trial metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub speaker_id: String,
    pub label: Label,
    /// `None` for bona fide audio.
    pub attack_id: Option<String>,
    pub partition: Partition,
    pub waveform: Waveform,
}

/// One manifest row; `wav_path` is relative to the corpus directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub utterance_id: String,
    pub speaker_id: String,
    pub label: Label,
    pub attack_id: String,
    pub partition: Partition,
    pub wav_path: String,
}

/// Corpus generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n_speakers: usize,
    pub n_bonafide: usize,
    /// Spoofs per attack; even, split half/half into Part-1 and Part-2.
    pub n_spoofs_per_attack: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub attacks: Vec<SpoofAttackSpec>,
    /// Bona fide allocation; the four counts must sum to `n_bonafide` and
    /// the evaluation pools must be equal so Part-1 and Part-2 mirror each
    /// other for bona fide audio as well.
    pub bona_cm_train: usize,
    pub bona_cm_dev: usize,
    pub bona_part1: usize,
    pub bona_part2: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            n_speakers: 10,
            n_bonafide: 200,
            n_spoofs_per_attack: 40,
            duration_s: 1.0,
            sample_rate: 16_000,
            attacks: SpoofAttackSpec::default_catalog(),
            bona_cm_train: 80,
            bona_cm_dev: 40,
            bona_part1: 40,
            bona_part2: 40,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |m: String| Err(CorpusError::InvalidConfig(m));
        if self.n_speakers < 2 {
            return fail("need at least 2 speakers for non-target trials".into());
        }
        if self.n_spoofs_per_attack == 0 || self.n_spoofs_per_attack % 2 != 0 {
            return fail(format!(
                "n_spoofs_per_attack must be even and positive, got {}",
                self.n_spoofs_per_attack
            ));
        }
        let total = self.bona_cm_train + self.bona_cm_dev + self.bona_part1 + self.bona_part2;
        if total != self.n_bonafide {
            return fail(format!(
                "bona fide allocation {total} does not sum to n_bonafide {}",
                self.n_bonafide
            ));
        }
        if self.bona_part1 != self.bona_part2 {
            return fail("bona fide Part-1 and Part-2 pools must be equal".into());
        }
        if [self.bona_cm_train, self.bona_cm_dev, self.bona_part1].contains(&0) {
            return fail("every bona fide pool must be non-empty".into());
        }
        if self.attacks.is_empty() {
            return fail("attack catalog must not be empty".into());
        }
        let mut ids = BTreeSet::new();
        let nyquist = self.sample_rate as f64 / 2.0;
        for attack in &self.attacks {
            if !ids.insert(attack.attack_id.as_str()) {
                return fail(format!("duplicate attack id {:?}", attack.attack_id));
            }
            if attack.artifact_frequency_hz <= 0.0 || attack.artifact_frequency_hz >= nyquist {
                return fail(format!(
                    "attack {} artifact frequency {} Hz must lie in (0, {nyquist})",
                    attack.attack_id, attack.artifact_frequency_hz
                ));
            }
            if attack.artifact_amplitude < 0.0 {
                return fail(format!(
                    "attack {} artifact amplitude must be >= 0",
                    attack.attack_id
                ));
            }
        }
        if self.duration_s < 0.5 {
            return fail("utterance duration must be >= 0.5 s".into());
        }
        Ok(())
    }
}

/// The full corpus: speakers plus every utterance with audio in memory.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub sample_rate: u32,
    pub speakers: Vec<SpeakerSpec>,
    pub utterances: Vec<Utterance>,
    pub attacks: Vec<SpoofAttackSpec>,
}

/// The spoofed utterances of one attack, split for optimisation (Part-1)
/// and universality testing (Part-2). Filter training consumes Part-1 only.
#[derive(Debug, Clone)]
pub struct AttackDataset {
    pub attack_id: String,
    pub part1: Vec<Utterance>,
    pub part2: Vec<Utterance>,
}

impl AttackDataset {
    pub fn part1_waveforms(&self) -> Vec<Waveform> {
        self.part1.iter().map(|u| u.waveform.clone()).collect()
    }

    pub fn part2_waveforms(&self) -> Vec<Waveform> {
        self.part2.iter().map(|u| u.waveform.clone()).collect()
    }
}

/// Builds speaker specs with fundamentals spread over [110, 280] Hz and
/// seeded formant-like resonances.
fn build_speakers(config: &ProtocolConfig, seed: u64) -> Vec<SpeakerSpec> {
    use rand::{Rng, SeedableRng};
    (0..config.n_speakers)
        .map(|i| {
            let frac = if config.n_speakers == 1 {
                0.0
            } else {
                i as f64 / (config.n_speakers - 1) as f64
            };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(mix_seed(seed, "speaker", i as u64));
            SpeakerSpec {
                speaker_id: format!("spk{i:02}"),
                fundamental_frequency_hz: 110.0 + 170.0 * frac,
                resonances_hz: vec![
                    rng.gen_range(400.0..850.0),
                    rng.gen_range(1_050.0..2_300.0),
                    rng.gen_range(2_450.0..3_300.0),
                ],
                rng_seed: mix_seed(seed, "speaker-stream", i as u64),
            }
        })
        .collect()
}

/// Generates the full corpus: bona fide utterances round-robin across
/// speakers into the four partitions, and per attack an equal number of
/// Part-1 and Part-2 spoofs derived from fresh attacker-side sources.
pub fn build_protocol(config: &ProtocolConfig, seed: u64) -> Result<Corpus, CorpusError> {
    config.validate()?;
    let speakers = build_speakers(config, seed);

    let bona: Vec<Utterance> = (0..config.n_bonafide)
        .into_par_iter()
        .map(|u| {
            let speaker = &speakers[u % speakers.len()];
            let waveform = generate_bonafide(
                speaker,
                config.duration_s,
                config.sample_rate,
                mix_seed(seed, "bona", u as u64),
            )?;
            let partition = if u < config.bona_cm_train {
                Partition::CmTrain
            } else if u < config.bona_cm_train + config.bona_cm_dev {
                Partition::CmDev
            } else if u < config.bona_cm_train + config.bona_cm_dev + config.bona_part1 {
                Partition::Part1
            } else {
                Partition::Part2
            };
            Ok(Utterance {
                id: format!("b{u:04}"),
                speaker_id: speaker.speaker_id.clone(),
                label: Label::Bonafide,
                attack_id: None,
                partition,
                waveform,
            })
        })
        .collect::<Result<_, CorpusError>>()?;

    let mut utterances = bona;
    for (a_idx, attack) in config.attacks.iter().enumerate() {
        let half = config.n_spoofs_per_attack / 2;
        let spoofs: Vec<Utterance> = (0..config.n_spoofs_per_attack)
            .into_par_iter()
            .map(|j| {
                let speaker = &speakers[j % speakers.len()];
                let stream = (a_idx * 1_000_000 + j) as u64;
                let source = generate_bonafide(
                    speaker,
                    config.duration_s,
                    config.sample_rate,
                    mix_seed(seed, "spoof-source", stream),
                )?;
                let waveform =
                    generate_spoof(&source, attack, mix_seed(seed, "spoof-artifact", stream))?;
                Ok(Utterance {
                    id: format!("s-{}-{j:04}", attack.attack_id),
                    speaker_id: speaker.speaker_id.clone(),
                    label: Label::Spoof,
                    attack_id: Some(attack.attack_id.clone()),
                    partition: if j < half {
                        Partition::Part1
                    } else {
                        Partition::Part2
                    },
                    waveform,
                })
            })
            .collect::<Result<_, CorpusError>>()?;
        utterances.extend(spoofs);
    }

    Ok(Corpus {
        sample_rate: config.sample_rate,
        speakers,
        utterances,
        attacks: config.attacks.clone(),
    })
}

impl Corpus {
    /// Bona fide utterances of one partition, in corpus order.
    pub fn bona(&self, partition: Partition) -> Vec<&Utterance> {
        self.utterances
            .iter()
            .filter(|u| u.label == Label::Bonafide && u.partition == partition)
            .collect()
    }

    pub fn bona_waveforms(&self, partition: Partition) -> Vec<Waveform> {
        self.bona(partition)
            .into_iter()
            .map(|u| u.waveform.clone())
            .collect()
    }

    /// Spoofed utterances of one attack and partition, in corpus order.
    pub fn spoofs(&self, attack_id: &str, partition: Partition) -> Vec<&Utterance> {
        self.utterances
            .iter()
            .filter(|u| {
                u.partition == partition && u.attack_id.as_deref() == Some(attack_id)
            })
            .collect()
    }

    pub fn attack_ids(&self) -> Vec<String> {
        self.attacks.iter().map(|a| a.attack_id.clone()).collect()
    }

    pub fn attack_spec(&self, attack_id: &str) -> Result<&SpoofAttackSpec, CorpusError> {
        self.attacks
            .iter()
            .find(|a| a.attack_id == attack_id)
            .ok_or_else(|| CorpusError::UnknownAttack(attack_id.to_string()))
    }

    pub fn speaker(&self, speaker_id: &str) -> Result<&SpeakerSpec, CorpusError> {
        self.speakers
            .iter()
            .find(|s| s.speaker_id == speaker_id)
            .ok_or_else(|| CorpusError::UnknownSpeaker(speaker_id.to_string()))
    }

    /// The Part-1/Part-2 spoof split for one attack.
    pub fn attack_dataset(&self, attack_id: &str) -> Result<AttackDataset, CorpusError> {
        self.attack_spec(attack_id)?;
        let dataset = AttackDataset {
            attack_id: attack_id.to_string(),
            part1: self
                .spoofs(attack_id, Partition::Part1)
                .into_iter()
                .cloned()
                .collect(),
            part2: self
                .spoofs(attack_id, Partition::Part2)
                .into_iter()
                .cloned()
                .collect(),
        };
        debug_assert_eq!(dataset.part1.len(), dataset.part2.len());
        Ok(dataset)
    }

    pub fn manifest(&self) -> Vec<ManifestRow> {
        self.utterances
            .iter()
            .map(|u| ManifestRow {
                utterance_id: u.id.clone(),
                speaker_id: u.speaker_id.clone(),
                label: u.label,
                attack_id: u.attack_id.clone().unwrap_or_else(|| "-".to_string()),
                partition: u.partition,
                wav_path: format!("wav/{}.wav", u.id),
            })
            .collect()
    }

    /// Writes `manifest.csv`, `speakers.json` and `wav/<id>.wav` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        let io_err = |path: &Path, e: std::io::Error| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let wav_dir = dir.join("wav");
        std::fs::create_dir_all(&wav_dir).map_err(|e| io_err(&wav_dir, e))?;

        for u in &self.utterances {
            write_wav(&wav_dir.join(format!("{}.wav", u.id)), &u.waveform)?;
        }

        let manifest_path = dir.join("manifest.csv");
        let mut writer = csv::Writer::from_path(&manifest_path)
            .map_err(|e| CorpusError::Manifest(e.to_string()))?;
        for row in self.manifest() {
            writer
                .serialize(row)
                .map_err(|e| CorpusError::Manifest(e.to_string()))?;
        }
        writer
            .flush()
            .map_err(|e| io_err(&manifest_path, e))?;

        let speakers_path = dir.join("speakers.json");
        let payload = serde_json::json!({
            "sample_rate": self.sample_rate,
            "speakers": self.speakers,
            "attacks": self.attacks,
        });
        let mut text = serde_json::to_string_pretty(&payload).expect("speakers serialize");
        text.push('\n');
        std::fs::write(&speakers_path, text).map_err(|e| io_err(&speakers_path, e))?;
        Ok(())
    }

    /// Loads a corpus previously written by [`Corpus::save`].
    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let speakers_path = dir.join("speakers.json");
        let text = std::fs::read_to_string(&speakers_path).map_err(|e| CorpusError::Io {
            path: speakers_path.display().to_string(),
            source: e,
        })?;
        #[derive(Deserialize)]
        struct Sidecar {
            sample_rate: u32,
            speakers: Vec<SpeakerSpec>,
            attacks: Vec<SpoofAttackSpec>,
        }
        let sidecar: Sidecar =
            serde_json::from_str(&text).map_err(|e| CorpusError::Manifest(e.to_string()))?;

        let manifest_path = dir.join("manifest.csv");
        let mut reader = csv::Reader::from_path(&manifest_path)
            .map_err(|e| CorpusError::Manifest(e.to_string()))?;
        let rows: Vec<ManifestRow> = reader
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| CorpusError::Manifest(e.to_string()))?;

        let utterances = rows
            .par_iter()
            .map(|row| {
                let waveform = read_wav(&dir.join(&row.wav_path))?;
                Ok(Utterance {
                    id: row.utterance_id.clone(),
                    speaker_id: row.speaker_id.clone(),
                    label: row.label,
                    attack_id: (row.attack_id != "-").then(|| row.attack_id.clone()),
                    partition: row.partition,
                    waveform,
                })
            })
            .collect::<Result<_, CorpusError>>()?;

        Ok(Corpus {
            sample_rate: sidecar.sample_rate,
            speakers: sidecar.speakers,
            attacks: sidecar.attacks,
            utterances,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ProtocolConfig {
        ProtocolConfig {
            n_speakers: 4,
            n_bonafide: 24,
            n_spoofs_per_attack: 8,
            duration_s: 0.5,
            attacks: vec![
                SpoofAttackSpec::new("SA1", 3_600.0, 0.05),
                SpoofAttackSpec::new("SA2", 4_400.0, 0.05),
            ],
            bona_cm_train: 8,
            bona_cm_dev: 8,
            bona_part1: 4,
            bona_part2: 4,
            ..ProtocolConfig::default()
        }
    }

    #[test]
    fn default_protocol_arithmetic() {
        let config = ProtocolConfig::default();
        config.validate().unwrap();
        assert_eq!(config.n_bonafide, 200);
        assert_eq!(config.attacks.len() * config.n_spoofs_per_attack, 160);
    }

    #[test]
    fn split_counts_and_disjoint_ids() {
        let corpus = build_protocol(&small_config(), 42).unwrap();
        assert_eq!(corpus.utterances.len(), 24 + 16);
        for attack in ["SA1", "SA2"] {
            let ds = corpus.attack_dataset(attack).unwrap();
            assert_eq!(ds.part1.len(), 4);
            assert_eq!(ds.part2.len(), 4);
            let p1: BTreeSet<&str> = ds.part1.iter().map(|u| u.id.as_str()).collect();
            let p2: BTreeSet<&str> = ds.part2.iter().map(|u| u.id.as_str()).collect();
            assert!(p1.is_disjoint(&p2));
        }
        let all_ids: BTreeSet<&str> = corpus.utterances.iter().map(|u| u.id.as_str()).collect();
        assert_eq!(all_ids.len(), corpus.utterances.len(), "ids must be unique");
        assert_eq!(corpus.bona(Partition::CmTrain).len(), 8);
        assert_eq!(corpus.bona(Partition::Part2).len(), 4);
    }

    #[test]
    fn rejects_odd_spoof_counts() {
        let mut config = small_config();
        config.n_spoofs_per_attack = 7;
        assert!(matches!(
            build_protocol(&config, 1),
            Err(CorpusError::InvalidConfig(_))
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = build_protocol(&small_config(), 7).unwrap();
        let b = build_protocol(&small_config(), 7).unwrap();
        assert_eq!(a.utterances.len(), b.utterances.len());
        for (x, y) in a.utterances.iter().zip(&b.utterances) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.waveform.samples(), y.waveform.samples());
        }
    }

    #[test]
    fn save_load_round_trip_preserves_structure() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = build_protocol(&small_config(), 3).unwrap();
        corpus.save(dir.path()).unwrap();
        let loaded = Corpus::load(dir.path()).unwrap();
        assert_eq!(loaded.utterances.len(), corpus.utterances.len());
        assert_eq!(loaded.speakers, corpus.speakers);
        assert_eq!(loaded.attacks, corpus.attacks);
        for (a, b) in corpus.utterances.iter().zip(&loaded.utterances) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.partition, b.partition);
            // WAV quantization bounds the audio round trip.
            for (x, y) in a.waveform.samples().iter().zip(b.waveform.samples()) {
                assert!((x - y).abs() <= 1.0 / 32_768.0);
            }
        }
        // Rerunning save on the loaded corpus reproduces the manifest bytes.
        let dir2 = tempfile::tempdir().unwrap();
        loaded.save(dir2.path()).unwrap();
        let m1 = std::fs::read(dir.path().join("manifest.csv")).unwrap();
        let m2 = std::fs::read(dir2.path().join("manifest.csv")).unwrap();
        assert_eq!(m1, m2);
    }
}
