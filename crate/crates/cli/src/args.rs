use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "wbmia", version, about = "White-box membership inference experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or ingest the configured data set and write it as JSON.
    GenData(Common),
    /// Train the target of one repetition.
    TrainTarget {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        repetition: usize,
    },
    /// Build one configured attack against the target of one repetition.
    Attack {
        #[command(flatten)]
        common: Common,
        /// Attack name (or kind, when unnamed) from the config.
        #[arg(long)]
        attack: String,
        #[arg(long, default_value_t = 0)]
        repetition: usize,
        /// Target model written by `train-target`; retrained when absent.
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Calibrate per-class thresholds of a saved attack on the holdout.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Attack document written by `attack`.
        #[arg(long)]
        attack_model: PathBuf,
        #[arg(long, default_value_t = 0)]
        repetition: usize,
    },
    /// Run the full repeated experiment.
    Run(Common),
    /// Validation sweep of general-wb over displacement and meta widths.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        n_d: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        n_m: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        validation_rounds: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::TrainTarget { .. } => "train-target",
            Command::Attack { .. } => "attack",
            Command::Calibrate { .. } => "calibrate",
            Command::Run(_) => "run",
            Command::Sweep { .. } => "sweep",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::GenData(c) | Command::Run(c) => c,
            Command::TrainTarget { common, .. }
            | Command::Attack { common, .. }
            | Command::Calibrate { common, .. }
            | Command::Sweep { common, .. } => common,
        }
    }
}

/// Flags shared by every subcommand. The optional ones mirror config
/// fields.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "wbmia-out")]
    pub out_dir: PathBuf,
    /// Repetitions run in parallel.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
    /// Let mirrored flags replace values the config sets differently.
    #[arg(long = "override")]
    pub override_config: bool,
    #[arg(long)]
    pub master_seed: Option<u64>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long)]
    pub calibration_sample_size: Option<usize>,
    /// Synthetic data sets only.
    #[arg(long)]
    pub records: Option<usize>,
}
