//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use malafide_core::attack::{optimize_filter, select_filter};
use malafide_core::corpus::{build_protocol, defender_training_spoofs, Corpus, Partition};
use malafide_core::detector::{train_cm, CmVariant, DifferentiableScorer, ToyCmModel};
use malafide_core::dsp::{
    encode_wav, frequency_response, read_wav, MalafideFilter,
};
use malafide_core::eval::{evaluate_cm, evaluate_sasv};
use malafide_core::metrics::MetricReport;

use crate::config::{RunConfig, RunPaths};
use crate::error::CliError;
use crate::util::{ensure_dir, write_atomic};

fn load_corpus(paths: &RunPaths) -> Result<Corpus, CliError> {
    let dir = paths.corpus_dir();
    if !dir.join("manifest.csv").exists() {
        return Err(CliError::Validation(format!(
            "no corpus at {}; run gen-corpus first",
            dir.display()
        )));
    }
    Ok(Corpus::load(&dir)?)
}

fn load_scorer(path: &Path) -> Result<ToyCmModel, CliError> {
    Ok(ToyCmModel::load(path)?)
}

/// Serializes any serde value as pretty JSON with a trailing newline.
fn pretty_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn score_csv_bytes(records: &[malafide_core::metrics::ScoreRecord]) -> Result<Vec<u8>, CliError> {
    let mut writer = csv_writer();
    for r in records {
        writer
            .serialize(r)
            .map_err(|e| CliError::Runtime(format!("cannot serialize scores: {e}")))?;
    }
    writer
        .into_inner()
        .map_err(|e| CliError::Runtime(format!("cannot flush scores: {e}")))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

// ---------------------------------------------------------------------------
// gen-corpus
// ---------------------------------------------------------------------------

pub fn gen_corpus(paths: &RunPaths, config: &RunConfig) -> Result<(), CliError> {
    ensure_dir(&paths.run_dir)?;
    let corpus = build_protocol(&config.corpus, config.master_seed)?;

    // Build into a temp directory, then swap it in whole.
    let staging = tempfile::Builder::new()
        .prefix(".corpus-staging-")
        .tempdir_in(&paths.run_dir)
        .map_err(|e| CliError::Runtime(format!("cannot stage corpus: {e}")))?;
    corpus.save(staging.path())?;

    let target = paths.corpus_dir();
    if target.exists() {
        std::fs::remove_dir_all(&target)
            .map_err(|e| CliError::Runtime(format!("cannot replace {}: {e}", target.display())))?;
    }
    let staged = staging.keep();
    std::fs::rename(&staged, &target).map_err(|e| {
        CliError::Runtime(format!(
            "cannot move staged corpus into {}: {e}",
            target.display()
        ))
    })?;

    let manifest = corpus.manifest();
    let bona = manifest.iter().filter(|r| r.attack_id == "-").count();
    println!(
        "gen-corpus: {} utterances ({} bona fide, {} spoofed) across {} attacks -> {}",
        manifest.len(),
        bona,
        manifest.len() - bona,
        config.corpus.attacks.len(),
        target.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train-cm
// ---------------------------------------------------------------------------

#[derive(serde::Serialize)]
struct TrainingReport<'a> {
    scorer_id: &'a str,
    heldout_eer: f64,
    eer_threshold: f64,
    undertrained: bool,
    epoch_losses: &'a [f64],
}

pub fn train_cm_cmd(
    paths: &RunPaths,
    config: &RunConfig,
    variant: CmVariant,
    seed_override: Option<u64>,
) -> Result<(), CliError> {
    let corpus = load_corpus(paths)?;
    // Training lists are cm-train followed by cm-dev; the holdout fraction
    // in the train config carves the cm-dev tail back off as the dev set.
    let mut bona = corpus.bona_waveforms(Partition::CmTrain);
    bona.extend(corpus.bona_waveforms(Partition::CmDev));
    let train_config = config.train_config(variant, seed_override);
    let spoof = defender_training_spoofs(&bona, &corpus.attacks, train_config.seed)?;

    let outcome = train_cm(&bona, &spoof, &train_config)?;

    let model_path = paths.model_file(variant);
    write_atomic(&model_path, outcome.model.to_json().as_bytes())?;
    let report = TrainingReport {
        scorer_id: variant.scorer_id(),
        heldout_eer: outcome.heldout_eer,
        eer_threshold: train_config.eer_threshold,
        undertrained: outcome.undertrained,
        epoch_losses: &outcome.epoch_losses,
    };
    let report_path = paths
        .models_dir()
        .join(format!("{}.report.json", variant.scorer_id()));
    write_atomic(&report_path, &pretty_json(&report)?)?;

    println!(
        "train-cm: {} held-out EER {:.4} -> {}",
        variant.scorer_id(),
        outcome.heldout_eer,
        model_path.display()
    );
    if outcome.undertrained {
        return Err(CliError::Runtime(format!(
            "undertrained: held-out EER {:.4} is not below the threshold {:.4}",
            outcome.heldout_eer, train_config.eer_threshold
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// optimize-filter
// ---------------------------------------------------------------------------

#[derive(serde::Serialize)]
struct SelectionRecord {
    attack_id: String,
    scorer_id: String,
    /// Part-1 success rate per trained length.
    part1_success_rates: BTreeMap<usize, f64>,
    selected_length: usize,
    selected_path: String,
}

pub struct OptimizeArgs {
    pub attack: String,
    pub scorer: PathBuf,
    pub lengths: Vec<usize>,
    pub seed_override: Option<u64>,
}

pub fn optimize_filter_cmd(
    paths: &RunPaths,
    config: &RunConfig,
    args: &OptimizeArgs,
) -> Result<(), CliError> {
    RunConfig::validate_lengths(&args.lengths)?;
    let corpus = load_corpus(paths)?;
    if !corpus.attack_ids().iter().any(|a| a == &args.attack) {
        return Err(CliError::Validation(format!(
            "unknown attack {:?}; corpus has {:?}",
            args.attack,
            corpus.attack_ids()
        )));
    }
    let scorer = load_scorer(&args.scorer)?;
    let dataset = corpus.attack_dataset(&args.attack)?;
    let part1 = dataset.part1_waveforms();

    ensure_dir(&paths.filters_dir())?;
    let stem =
        |length: usize| format!("{}-{}-L{length}", args.attack, scorer.scorer_id());

    let mut candidates = Vec::new();
    let mut rates = BTreeMap::new();
    for &length in &args.lengths {
        let attack_config = config.attack_config(length, args.seed_override);
        let (filter, report) = optimize_filter(&scorer, &args.attack, &part1, &attack_config)?;
        let base = paths.filters_dir().join(stem(length));
        write_atomic(
            &base.with_extension("json"),
            filter.to_json()?.as_bytes(),
        )?;
        write_atomic(
            &base.with_extension("report.json"),
            report.to_json().as_bytes(),
        )?;
        write_atomic(
            &base.with_extension("epochs.csv"),
            report.epoch_csv().as_bytes(),
        )?;
        println!(
            "optimize-filter: {} L={length} part1 success {:.3} (dirac baseline {:.3}) in {:.1?}",
            args.attack,
            report.final_part1_success_rate,
            report.dirac_success_rate,
            report.wall_clock
        );
        rates.insert(length, report.final_part1_success_rate);
        candidates.push((filter, report.final_part1_success_rate));
    }

    let selected = select_filter(candidates)?;
    let selection = SelectionRecord {
        attack_id: args.attack.clone(),
        scorer_id: scorer.scorer_id().to_string(),
        part1_success_rates: rates,
        selected_length: selected.len(),
        selected_path: format!("filters/{}.json", stem(selected.len())),
    };
    let selection_path = paths
        .filters_dir()
        .join(format!("{}-{}.selection.json", args.attack, scorer.scorer_id()));
    write_atomic(&selection_path, &pretty_json(&selection)?)?;
    println!(
        "optimize-filter: selected L={} -> {}",
        selected.len(),
        selection_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// apply-filter
// ---------------------------------------------------------------------------

pub fn apply_filter_cmd(filter: &Path, input: &Path, output: &Path) -> Result<(), CliError> {
    let filter = MalafideFilter::load(filter)?;
    let wave = read_wav(input)?;
    let filtered = malafide_core::dsp::convolve_same(&wave, &filter)?;
    write_atomic(output, &encode_wav(&filtered))?;
    println!(
        "apply-filter: {} ({} taps, attack {}) applied to {} -> {}",
        filter.scorer_id(),
        filter.len(),
        filter.attack_id(),
        input.display(),
        output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

pub struct EvaluateArgs {
    pub scorer: PathBuf,
    pub filter: Option<PathBuf>,
    pub attack: Option<String>,
    pub sasv: bool,
    pub tag: Option<String>,
    pub matrix_out: Option<PathBuf>,
}

pub fn evaluate_cmd(
    paths: &RunPaths,
    config: &RunConfig,
    args: &EvaluateArgs,
) -> Result<(), CliError> {
    let corpus = load_corpus(paths)?;
    let scorer = load_scorer(&args.scorer)?;
    let filter = args
        .filter
        .as_deref()
        .map(MalafideFilter::load)
        .transpose()?;

    let filter_stem = args
        .filter
        .as_deref()
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "no-filter".to_string());
    let tag = args
        .tag
        .clone()
        .unwrap_or_else(|| format!("{}__{}", scorer.scorer_id(), filter_stem));
    let out_dir = paths.eval_dir().join(&tag);
    ensure_dir(&out_dir)?;

    let cm = evaluate_cm(&scorer, &corpus, args.attack.as_deref(), filter.as_ref())?;
    write_atomic(&out_dir.join("cm_scores.csv"), &score_csv_bytes(&cm.records)?)?;

    let mut reports = vec![MetricReport::new(
        "cm-eer",
        cm.eer,
        cm.threshold,
        &[
            ("bonafide", cm.bona_scores.len()),
            ("spoof", cm.spoof_scores.len()),
        ],
    )];
    println!(
        "evaluate: {} vs {} -> CM EER {:.4} ({} bona, {} spoof trials)",
        scorer.scorer_id(),
        filter_stem,
        cm.eer,
        cm.bona_scores.len(),
        cm.spoof_scores.len()
    );

    if args.sasv {
        let attack_id = match (&args.attack, &filter) {
            (Some(a), _) => a.clone(),
            (None, Some(f)) => f.attack_id().to_string(),
            (None, None) => {
                return Err(CliError::Validation(
                    "--sasv needs --attack (or a filter that names one)".into(),
                ))
            }
        };
        let sasv = evaluate_sasv(
            &scorer,
            &corpus,
            &attack_id,
            filter.as_ref(),
            config.evaluation.nontarget_per_bona,
        )?;
        write_atomic(
            &out_dir.join("sasv_scores.csv"),
            &score_csv_bytes(&sasv.records)?,
        )?;
        reports.push(MetricReport::new(
            "sasv-eer",
            sasv.sasv_eer,
            sasv.sasv_threshold,
            &[
                ("target", sasv.n_target),
                ("nontarget", sasv.n_nontarget),
                ("spoof", sasv.n_spoof),
            ],
        ));
        reports.push(MetricReport::new(
            "asv-eer",
            sasv.asv_eer,
            f64::NAN,
            &[
                ("target", sasv.n_target),
                ("nontarget", sasv.n_nontarget),
            ],
        ));
        println!(
            "evaluate: SASV-EER {:.4}, toy-ASV EER {:.4} (attack {attack_id})",
            sasv.sasv_eer, sasv.asv_eer
        );
    }
    write_atomic(&out_dir.join("metrics.json"), &pretty_json(&reports)?)?;

    if let Some(matrix) = &args.matrix_out {
        append_matrix_row(matrix, &scorer, filter.as_ref(), args.attack.as_deref(), cm.eer)?;
    }
    Ok(())
}

/// Appends one transfer-matrix row, creating the file with a header first:
/// rows are keyed by filter length and (training scorer, evaluation scorer).
fn append_matrix_row(
    path: &Path,
    eval_scorer: &ToyCmModel,
    filter: Option<&MalafideFilter>,
    attack: Option<&str>,
    eer: f64,
) -> Result<(), CliError> {
    let mut text = String::new();
    if !path.exists() {
        text.push_str("filter_length,filter_scorer,eval_scorer,attack,eer\n");
    }
    let (length, train_scorer, attack_name) = match filter {
        Some(f) => (
            f.len().to_string(),
            f.scorer_id().to_string(),
            f.attack_id().to_string(),
        ),
        None => (
            "none".to_string(),
            "-".to_string(),
            attack.unwrap_or("all").to_string(),
        ),
    };
    text.push_str(&format!(
        "{length},{train_scorer},{},{attack_name},{eer}\n",
        eval_scorer.scorer_id()
    ));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    use std::io::Write;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
    file.write_all(text.as_bytes())
        .map_err(|e| CliError::Runtime(format!("cannot append {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// analyze-filter
// ---------------------------------------------------------------------------

pub fn analyze_filter_cmd(
    paths: &RunPaths,
    config: &RunConfig,
    filter_path: &Path,
    nfft: Option<usize>,
    out_dir: Option<PathBuf>,
) -> Result<(), CliError> {
    let filter = MalafideFilter::load(filter_path)?;
    let n_fft = nfft.unwrap_or(config.evaluation.nfft);
    let response = frequency_response(&filter, n_fft)?;

    let stem = filter_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "filter".into());
    let out_dir = out_dir.unwrap_or_else(|| paths.analysis_dir().join(stem));
    ensure_dir(&out_dir)?;

    // Impulse response: tap index relative to the centre (t = 0).
    let mut impulse = String::from("tap_index,coefficient\n");
    let c = filter.center() as isize;
    for (i, &coef) in filter.coefficients().iter().enumerate() {
        impulse.push_str(&format!("{},{}\n", i as isize - c, coef));
    }
    write_atomic(&out_dir.join("impulse.csv"), impulse.as_bytes())?;

    let mut spectrum = String::from("freq_hz,magnitude_db\n");
    for (f, m) in response.frequencies_hz.iter().zip(&response.magnitude_db) {
        spectrum.push_str(&format!("{f},{m}\n"));
    }
    write_atomic(&out_dir.join("response.csv"), spectrum.as_bytes())?;

    println!(
        "analyze-filter: {} taps, n_fft {n_fft} -> {}",
        filter.len(),
        out_dir.display()
    );
    Ok(())
}
