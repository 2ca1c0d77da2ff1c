use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use suscept_core::pipeline::{self, RunConfig};
use suscept_core::Error;

/// Sparse adversarial susceptibility screening of time-series records.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML). Relative paths inside it resolve against its
    /// directory; without it, defaults resolve against the working directory.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set attack.alpha=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Impute, repair, pad and normalize the raw cohort files.
    Preprocess,
    /// Generate the seeded synthetic cohort.
    Synth {
        /// Also write raw observation and label files, dropping this share of cells.
        #[arg(long, value_name = "GAP_RATE")]
        raw: Option<f64>,
    },
    /// Plan stratified, rebalanced cross-validation folds.
    Split,
    /// Train and evaluate one model per fold.
    Train,
    /// Attack a single record with one fold's model.
    Attack {
        #[arg(long)]
        fold: usize,
        #[arg(long)]
        record: String,
        /// Target class; defaults to the next class after the record's label.
        #[arg(long)]
        target: Option<usize>,
    },
    /// Screen every fold's held-out records in each configured direction.
    Screen,
    /// Render report.md from the training and screening outputs.
    Report,
    /// Print the effective configuration.
    Config,
}

const EXIT_INPUT: u8 = 1;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_NO_SUCCESS: u8 = 4;

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path, &cli.common.overrides)?,
        None => RunConfig::with_base(
            &std::env::current_dir().unwrap_or_default(),
            &cli.common.overrides,
        )?,
    };
    match cli.command {
        Command::Preprocess => println!("{}", pipeline::cmd_preprocess(&cfg)?),
        Command::Synth { raw } => println!("{}", pipeline::cmd_synth(&cfg, raw)?),
        Command::Split => println!("{}", pipeline::cmd_split(&cfg)?),
        Command::Train => println!("{}", pipeline::cmd_train(&cfg)?.render()),
        Command::Attack {
            fold,
            record,
            target,
        } => {
            let attack = pipeline::cmd_attack(&cfg, fold, &record, target)?;
            println!("{}", serde_json::to_string(&attack)?);
            if attack.selected.is_none() {
                eprintln!("error: no lambda in the sweep flipped record `{record}`");
                return Ok(ExitCode::from(EXIT_NO_SUCCESS));
            }
        }
        Command::Screen => {
            let summary = pipeline::cmd_screen(&cfg)?;
            println!("{}", summary.render());
            let failed = summary.failed_directions();
            if !failed.is_empty() {
                for d in failed {
                    eprintln!("error: no successful attack in direction {d}; no map written");
                }
                return Ok(ExitCode::from(EXIT_NO_SUCCESS));
            }
        }
        Command::Report => print!("{}", pipeline::cmd_report(&cfg)?),
        Command::Config => print!("{}", cfg.to_toml_string()),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_INPUT
            })
        }
    }
}
