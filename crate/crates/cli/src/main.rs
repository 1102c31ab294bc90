mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use hypernews::Variant;

use crate::config::{keys_help, CliConfig};
use crate::error::CliError;

/// Multi-view fake-news classifier: synthesize data, train, evaluate,
/// ablate and sweep.
#[derive(Debug, Parser)]
#[command(
    name = "hypernews",
    version,
    after_help = "Log verbosity: HYPERNEWS_LOG=info (or debug)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file with [model] and [train] tables
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable); wins over --config
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for --set train.seed=N
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self, mut base: CliConfig) -> Result<CliConfig, CliError> {
        if let Some(path) = &self.config {
            base.load_toml(path)?;
        }
        for o in &self.overrides {
            base.apply_override(o)?;
        }
        if let Some(seed) = self.seed {
            base.set("train.seed", &seed.to_string())?;
        }
        Ok(base)
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

#[derive(Debug, Args)]
struct DataArg {
    /// Directory holding news.jsonl, trees.jsonl and hyperedges.jsonl
    #[arg(long, value_name = "DIR", default_value = "data")]
    data: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitChoice {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled synthetic dataset
    #[command(after_help = keys_help())]
    Synth {
        /// Number of news items (even)
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Distance between the two class means
        #[arg(long, default_value_t = 2.0)]
        delta: f64,
        /// Text vector width [default: model.d_in]
        #[arg(long)]
        d_in: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train on a 6:2:2 split and score the test set
    #[command(after_help = keys_help())]
    Train {
        #[command(flatten)]
        data: DataArg,
        /// Repeat over seeds seed..seed+N-1 with fresh splits [default N: train.repeats]
        #[arg(long, value_name = "N", num_args = 0..=1)]
        repeat: Option<Option<usize>>,
        /// Save every layer's relearned incidence after each epoch
        #[arg(long)]
        record_structures: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Score saved parameters on a split
    #[command(after_help = keys_help())]
    Eval {
        #[command(flatten)]
        data: DataArg,
        /// params.json written by train
        #[arg(long, value_name = "FILE", default_value = "out/params.json")]
        params: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitChoice,
        #[command(flatten)]
        common: Common,
    },
    /// Train the full model and its ablation variants
    #[command(after_help = keys_help())]
    Ablate {
        #[command(flatten)]
        data: DataArg,
        /// Variant to run (repeatable): full, "w/o Text", "w/o Pro", "w/o HG", "w/o CL", "w/o DHSL" [default: all]
        #[arg(long = "variant", value_parser = parse_variant)]
        variants: Vec<Variant>,
        #[command(flatten)]
        common: Common,
    },
    /// Train once per p_thd grid value
    #[command(after_help = keys_help())]
    Sweep {
        #[command(flatten)]
        data: DataArg,
        /// Comma-separated p_thd values [default: 0.0, 0.1, ..., 1.0]
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Print dataset statistics
    #[command(after_help = keys_help())]
    Inspect {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: hypernews::Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("HYPERNEWS_LOG", "warn"))
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
