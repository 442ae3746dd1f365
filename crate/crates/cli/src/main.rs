//! `htdetect`: prepare, train, evaluate, predict and report.
//!
//! Exit codes: 0 success, 2 validation error, 3 runtime or training error.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use htdetect_core::corpus::{DEFAULT_SPLIT_RATIOS, DEFAULT_SPLIT_SEED};
use htdetect_core::models::CHECKPOINT_DIR_ENV;
use htdetect_core::Language;

use commands::Part;
use failure::{CliResult, Failure};

#[derive(Debug, Parser)]
#[command(name = "htdetect", version, about = "Homophobia/transphobia detection for Malayalam and Tamil comments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate and split a labeled TSV; write cleaned text and a class summary.
    Prepare {
        /// Labeled TSV with `comment` and `category` columns (and optional `id`).
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        language: Language,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SPLIT_SEED)]
        seed: u64,
        /// Train, validation and test fractions.
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = DEFAULT_SPLIT_RATIOS)]
        ratios: Vec<f64>,
        /// Shuffle the whole corpus instead of splitting each class separately.
        #[arg(long)]
        no_stratify: bool,
        /// Fail unless the class counts equal the reference corpus counts.
        #[arg(long)]
        verify_counts: bool,
    },
    /// Train one model from a TOML run configuration.
    #[command(after_help = format!("Pretrained checkpoints are read from ${CHECKPOINT_DIR_ENV}/<hub id>/."))]
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `out` in the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        language: Option<Language>,
    },
    /// Score a trained model on a labeled split.
    Evaluate {
        /// Run directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Prepared split directory or a labeled TSV.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Part::Test)]
        part: Part,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        language: Option<Language>,
    },
    /// Label unlabeled comments.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// TSV with a `comment` column (and optional `id`).
        #[arg(long)]
        input: PathBuf,
        /// Output TSV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        language: Option<Language>,
    },
    /// Combine evaluation reports into per-language result tables.
    Report {
        /// `report.json` files, evaluation directories, or parents of those.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// TOML file of expected weighted F1 values to compare against.
        #[arg(long)]
        expected: Option<PathBuf>,
        #[arg(long)]
        language: Option<Language>,
    },
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Prepare {
            dataset,
            language,
            out,
            seed,
            ratios,
            no_stratify,
            verify_counts,
        } => {
            let ratios: [f64; 3] = ratios
                .try_into()
                .map_err(|_| Failure::validation(anyhow::anyhow!("--ratios takes exactly three values")))?;
            commands::prepare(&commands::PrepareArgs {
                dataset,
                language,
                out,
                seed,
                ratios,
                stratified: !no_stratify,
                verify_counts,
            })
        }
        Command::Train {
            config,
            seed,
            out,
            language,
        } => commands::train_cmd(&commands::TrainArgs {
            config,
            seed,
            out,
            language,
        }),
        Command::Evaluate {
            model,
            data,
            part,
            out,
            language,
        } => commands::evaluate(&commands::EvaluateArgs {
            model,
            data,
            part,
            out,
            language,
        }),
        Command::Predict {
            model,
            input,
            out,
            language,
        } => commands::predict(&commands::PredictArgs {
            model,
            input,
            out,
            language,
        }),
        Command::Report {
            inputs,
            out,
            expected,
            language,
        } => {
            let (text, ok) = commands::report(&commands::ReportArgs {
                inputs,
                out,
                expected,
                language,
            })?;
            if ok {
                Ok(text)
            } else {
                print!("{text}");
                Err(Failure::validation(anyhow::anyhow!(
                    "some weighted F1 values are outside the expected tolerance"
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
