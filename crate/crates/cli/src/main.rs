mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use l2i::interpreter::Pooling;
use l2i::synthgen::TaskMode;

use commands::{Baseline, Suite};
use config::{CorruptMode, RunConfig, SEED_ENV};
use error::CliError;

/// Listenable interpretations for audio classifiers.
///
/// Every command reads the configuration (defaults, then `--config`, then
/// `--set`, then `L2I_SEED`) and writes its outputs plus a
/// `manifest-<command>.json` into `paths.work_dir`.
#[derive(Debug, Parser)]
#[command(name = "l2i", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, short, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set nmf.k=50` (repeatable).
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize the configured dataset into <work_dir>/data.
    GenData {
        /// Dataset preset (toy4 or toy-urban).
        #[arg(long)]
        preset: Option<String>,
    },
    /// Copy a labelled WAV folder into <work_dir>/data.
    Ingest {
        #[arg(long)]
        audio_dir: PathBuf,
        /// CSV with columns filename,split,label.
        #[arg(long)]
        labels: PathBuf,
        /// multi-class or multi-label.
        #[arg(long, default_value = "multi-class")]
        mode: TaskMode,
    },
    /// Learn the NMF dictionary from the training split.
    LearnDict {
        /// Noise components from background-only clips, then per-class blocks.
        #[arg(long)]
        staged: bool,
        /// Only report the final objective for each of these sizes.
        #[arg(long, value_delimiter = ',', value_name = "K,K,...")]
        sweep_k: Vec<usize>,
    },
    /// Train the audio classifier.
    TrainClassifier,
    /// Train the interpreter against the frozen classifier and dictionary.
    TrainInterpreter {
        /// att or max.
        #[arg(long)]
        pooling: Option<Pooling>,
    },
    /// Render interpretations of the test split as audio.
    Interpret {
        /// Relevance threshold in (0, 1].
        #[arg(long)]
        tau: Option<f64>,
        /// Also write one WAV per selected component.
        #[arg(long)]
        per_component: bool,
        /// Dataset directory (default: <work_dir>/data).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Interpret only the first N test clips.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        pooling: Option<Pooling>,
    },
    /// Write a corrupted copy of the test split.
    Corrupt {
        #[arg(long, value_enum)]
        mode: Option<CorruptMode>,
        /// Signal-to-corruption ratio in dB.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Fidelity and faithfulness reports on a test split.
    Evaluate {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        /// Also score removal of randomly drawn components.
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        pooling: Option<Pooling>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Write per-sample relevance vectors as CSV.
    ExportRelevances {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        pooling: Option<Pooling>,
    },
    /// Print the resolved configuration as TOML.
    ShowConfig,
}

impl Command {
    /// Flags that are shorthands for configuration keys.
    fn config_overrides(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                out.push(format!("{key}={v}"));
            }
        };
        match self {
            Command::GenData { preset } => push("dataset.preset", preset.as_ref().map(|p| format!("{p:?}"))),
            Command::TrainInterpreter { pooling } | Command::ExportRelevances { pooling, .. } => {
                push("interpreter.pooling", pooling.map(quoted_pooling))
            }
            Command::Interpret { tau, per_component, pooling, .. } => {
                push("interpret.tau", tau.map(|t| format!("{t:?}")));
                push("interpret.per_component", per_component.then(|| "true".into()));
                push("interpreter.pooling", pooling.map(quoted_pooling));
            }
            Command::Corrupt { mode, snr, .. } => {
                push("corrupt.mode", mode.map(|m| format!("{:?}", format!("{m:?}").to_lowercase())));
                push("corrupt.snr_db", snr.map(|s| format!("{s:?}")));
            }
            Command::Evaluate { pooling, tau, .. } => {
                push("interpreter.pooling", pooling.map(quoted_pooling));
                push("interpret.tau", tau.map(|t| format!("{t:?}")));
            }
            _ => {}
        }
        out
    }
}

fn quoted_pooling(p: Pooling) -> String {
    format!("\"{}\"", commands::pooling_name(p))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.overrides.clone();
    overrides.extend(cli.command.config_overrides());
    let env_seed = std::env::var(SEED_ENV).ok();
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides, env_seed.as_deref())?;
    match &cli.command {
        Command::GenData { .. } => commands::gen_data(&cfg),
        Command::Ingest { audio_dir, labels, mode } => commands::ingest(&cfg, audio_dir, labels, *mode),
        Command::LearnDict { staged, sweep_k } => {
            if *staged && !sweep_k.is_empty() {
                return Err(CliError::Usage("--staged and --sweep-k cannot be combined".into()));
            }
            if sweep_k.contains(&0) {
                return Err(CliError::Usage("--sweep-k sizes must be >= 1".into()));
            }
            commands::learn_dict(&cfg, *staged, sweep_k)
        }
        Command::TrainClassifier => commands::train_classifier_cmd(&cfg),
        Command::TrainInterpreter { .. } => commands::train_interpreter_cmd(&cfg, cfg.interpreter.pooling),
        Command::Interpret { data, limit, .. } => commands::interpret(&cfg, data.as_deref(), *limit),
        Command::Corrupt { data, .. } => commands::corrupt(&cfg, data.as_deref()),
        Command::Evaluate { suite, baseline, data, .. } => commands::evaluate(&cfg, *suite, *baseline, data.as_deref()),
        Command::ExportRelevances { data, out, .. } => {
            commands::export_relevances_cmd(&cfg, data.as_deref(), out.as_deref())
        }
        Command::ShowConfig => {
            let text = toml::to_string(&cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
