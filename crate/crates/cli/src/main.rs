//! `malafide`: end-to-end command-line driver for adversarial LTI filter
//! experiments against audio spoofing countermeasures.
//!
//! A run directory accumulates everything one experiment produces: the
//! synthetic corpus, trained CM models, optimised filters with reports,
//! evaluation metrics, and the exact resolved configuration of every
//! command. All commands are deterministic given (config, seed).

mod commands;
mod config;
mod error;
mod util;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use malafide_core::detector::CmVariant;

use crate::commands::{EvaluateArgs, OptimizeArgs};
use crate::config::{write_resolved_config, RunConfig, RunPaths};
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "malafide",
    version,
    about = "Optimise and evaluate adversarial LTI filters against audio spoofing countermeasures"
)]
struct Cli {
    /// Run directory for corpus, models, filters and reports.
    #[arg(long, global = true, default_value = "runs/default")]
    run_dir: PathBuf,

    /// TOML run configuration; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    A,
    B,
}

impl From<VariantArg> for CmVariant {
    fn from(v: VariantArg) -> CmVariant {
        match v {
            VariantArg::A => CmVariant::A,
            VariantArg::B => CmVariant::B,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus (WAV files plus manifest).
    GenCorpus {
        /// Override the master seed for this command.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a built-in CM variant on the defender partition.
    TrainCm {
        #[arg(long, value_enum, default_value = "a")]
        variant: VariantArg,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Optimise adversarial filters for one attack across filter lengths.
    OptimizeFilter {
        /// Attack id, e.g. SA1.
        #[arg(long)]
        attack: String,
        /// Path to the scorer model JSON the attack is optimised against.
        #[arg(long)]
        scorer: PathBuf,
        /// Comma-separated filter lengths (catalog values only); defaults to
        /// the config's attack.lengths.
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        weight_decay: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Convolve a WAV file with a stored filter.
    ApplyFilter {
        #[arg(long)]
        filter: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Evaluate CM EER on Part-2 trials, optionally under a filter attack
    /// and optionally with fused CM+ASV (SASV) metrics.
    Evaluate {
        #[arg(long)]
        scorer: PathBuf,
        #[arg(long)]
        filter: Option<PathBuf>,
        /// Restrict spoof trials to one attack (defaults to the filter's).
        #[arg(long)]
        attack: Option<String>,
        /// Also compute fused CM+ASV SASV-EER with the toy ASV.
        #[arg(long)]
        sasv: bool,
        /// Output subdirectory under eval/ (defaults to scorer__filter).
        #[arg(long)]
        tag: Option<String>,
        /// Append a row (filter_length, filter_scorer, eval_scorer, attack,
        /// eer) to this CSV; builds Table-1-style transfer matrices.
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
    /// Export a filter's impulse response and normalised magnitude spectrum
    /// as CSV.
    AnalyzeFilter {
        #[arg(long)]
        filter: PathBuf,
        /// FFT size (power of two, >= filter length).
        #[arg(long)]
        nfft: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors.
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("malafide: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let paths = RunPaths::new(&cli.run_dir);
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.corpus.validate()?;
    let argv: Vec<String> = std::env::args().collect();

    match cli.command {
        Command::GenCorpus { seed } => {
            if let Some(seed) = seed {
                config.master_seed = seed;
            }
            write_resolved_config(&paths, "gen-corpus", &config, &argv)?;
            commands::gen_corpus(&paths, &config)
        }
        Command::TrainCm { variant, seed } => {
            if let Some(seed) = seed {
                config.master_seed = seed;
            }
            write_resolved_config(&paths, "train-cm", &config, &argv)?;
            commands::train_cm_cmd(&paths, &config, variant.into(), seed)
        }
        Command::OptimizeFilter {
            attack,
            scorer,
            lengths,
            epochs,
            learning_rate,
            weight_decay,
            batch_size,
            seed,
        } => {
            if let Some(seed) = seed {
                config.master_seed = seed;
            }
            if let Some(epochs) = epochs {
                if epochs == 0 {
                    return Err(CliError::Validation("epochs must be >= 1".into()));
                }
                config.attack.epochs = epochs;
            }
            if let Some(lr) = learning_rate {
                config.attack.learning_rate = lr;
            }
            if let Some(wd) = weight_decay {
                config.attack.weight_decay = wd;
            }
            if let Some(bs) = batch_size {
                config.attack.batch_size = bs;
            }
            let lengths = lengths.unwrap_or_else(|| config.attack.lengths.clone());
            RunConfig::validate_lengths(&lengths)?;
            config.attack.lengths = lengths.clone();
            write_resolved_config(&paths, "optimize-filter", &config, &argv)?;
            commands::optimize_filter_cmd(
                &paths,
                &config,
                &OptimizeArgs {
                    attack,
                    scorer,
                    lengths,
                    seed_override: seed,
                },
            )
        }
        Command::ApplyFilter {
            filter,
            input,
            output,
        } => commands::apply_filter_cmd(&filter, &input, &output),
        Command::Evaluate {
            scorer,
            filter,
            attack,
            sasv,
            tag,
            matrix_out,
        } => {
            write_resolved_config(&paths, "evaluate", &config, &argv)?;
            commands::evaluate_cmd(
                &paths,
                &config,
                &EvaluateArgs {
                    scorer,
                    filter,
                    attack,
                    sasv,
                    tag,
                    matrix_out,
                },
            )
        }
        Command::AnalyzeFilter {
            filter,
            nfft,
            out_dir,
        } => {
            if let Some(n) = nfft {
                config.evaluation.nfft = n;
            }
            write_resolved_config(&paths, "analyze-filter", &config, &argv)?;
            commands::analyze_filter_cmd(&paths, &config, &filter, nfft, out_dir)
        }
    }
}
