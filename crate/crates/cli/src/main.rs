//! `netsynth`: train, sample, evaluate and audit synthetic time-series
//! generators.
//!
//! Every command writes `manifest.json` into its output directory. Failures
//! exit non-zero with a single JSON line on stderr:
//!
//!     {"error":"validation","message":"--data is required; ..."}

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "netsynth", version, about = "Synthetic time-series generation with fidelity and privacy audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a generator (or baseline) on a dataset directory.
    Train(TrainArgs),
    /// Sample a synthetic dataset from a trained model.
    Generate(GenerateArgs),
    /// Compare a synthetic dataset against a real one.
    Evaluate(EvaluateArgs),
    /// Membership-inference success against training-set size.
    Attack(AttackArgs),
    /// Autocorrelation under differentially private critic updates.
    DpAblation(DpAblationArgs),
    /// Retrain only the metadata generator towards new target metadata.
    Retarget(RetargetArgs),
    /// Write the two-class sinusoid benchmark corpus.
    MakeCorpus(CorpusArgs),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (falls back to the config file, then NETSYNTH_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// doppelganger, ar, rnn, hmm or naive_gan.
    #[arg(long)]
    model: Option<String>,
    /// Optimizer steps (doppelganger, ar, naive_gan).
    #[arg(long)]
    max_batches: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Steps emitted per recurrent pass.
    #[arg(long)]
    batch_param: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Per-sample normalisation of numeric measurements.
    #[arg(long)]
    auto_normalize: Option<bool>,
    /// Enables private critic updates with this noise multiplier.
    #[arg(long)]
    dp_noise: Option<f64>,
    /// Per-example clip norm for private critic updates.
    #[arg(long)]
    dp_clip: Option<f64>,
    /// Write a checkpoint every N steps into `<out>/checkpoints`.
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// Model file written by `train` or `retarget`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    /// Run exactly this many steps per sample.
    #[arg(long)]
    length: Option<usize>,
    /// JSON object of metadata values (by field name) shared by every sample.
    #[arg(long)]
    metadata_file: Option<PathBuf>,
    /// Draw categorical measurements from their softmax instead of argmax.
    #[arg(long)]
    sample_categorical: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    real: Option<PathBuf>,
    #[arg(long)]
    synth: Option<PathBuf>,
    /// Comma-separated metric families; all when omitted.
    #[arg(long)]
    metrics: Option<String>,
    #[arg(long)]
    max_lag: Option<usize>,
    /// `classify:<metadata field>` or `forecast:<measurement>:<horizon>`.
    #[arg(long)]
    downstream: Option<String>,
    /// Comma-separated predictors for the downstream task.
    #[arg(long)]
    predictors: Option<String>,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated training-set sizes.
    #[arg(long, default_value = "50,500")]
    sizes: String,
    #[arg(long, default_value = "0,1,2")]
    seeds: String,
    #[arg(long)]
    max_batches: Option<usize>,
}

#[derive(Args)]
struct DpAblationArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated noise multipliers.
    #[arg(long, default_value = "0,1")]
    sigmas: String,
    #[arg(long, default_value = "0,1,2")]
    seeds: String,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    max_batches: Option<usize>,
    /// Numeric measurement to compare; the first one when omitted.
    #[arg(long)]
    measurement: Option<String>,
    #[arg(long)]
    max_lag: Option<usize>,
}

#[derive(Args)]
struct RetargetArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dataset directory whose metadata is the new target.
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    max_batches: Option<usize>,
}

#[derive(Args)]
struct CorpusArgs {
    #[command(flatten)]
    common: Common,
    /// base, long (length 280) or mixed (lengths 28 and 56).
    #[arg(long, default_value = "base")]
    variant: String,
    #[arg(long)]
    samples: Option<usize>,
    /// Comma-separated lengths, drawn uniformly per sample.
    #[arg(long)]
    lengths: Option<String>,
    #[arg(long)]
    class_b_fraction: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    batch_param: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Generate(a) => commands::generate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Attack(a) => commands::attack(a),
        Command::DpAblation(a) => commands::dp_ablation(a),
        Command::Retarget(a) => commands::retarget(a),
        Command::MakeCorpus(a) => commands::make_corpus(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}

fn error_line(e: &anyhow::Error) -> String {
    let kind = match e.downcast_ref::<netsynth::Error>() {
        Some(netsynth::Error::Io { .. }) => "io",
        Some(netsynth::Error::Format(_)) => "format",
        Some(netsynth::Error::Validation(_)) => "validation",
        Some(netsynth::Error::Contract(_)) => "contract",
        Some(netsynth::Error::Numeric(_)) => "numeric",
        None => "internal",
    };
    let message = format!("{e:#}").replace(['\n', '\r'], " ");
    serde_json::json!({ "error": kind, "message": message }).to_string()
}
