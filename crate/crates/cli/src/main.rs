//! `spardip`: synthesize S-parameter data, fit it, and run comparison studies.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config values: exit code 2.
    Usage(String),
    /// Anything that went wrong while running: exit code 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<spardip::Error> for CliError {
    fn from(e: spardip::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

#[derive(Parser, Debug)]
#[command(name = "spardip", version, about = "Dense S-parameter reconstruction from sparse frequency samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random pole-residue model and write its samples.
    Synth(SynthArgs),
    /// Fit the deep prior with SGLD to a sub-sampled Touchstone file.
    FitDip(FitDipArgs),
    /// Fit the vector fitting baseline to a sub-sampled Touchstone file.
    FitVf(FitVfArgs),
    /// PSNR of several methods over rates and seeds.
    Sweep(SweepArgs),
    /// PSNR of the five-step ablation ladder over rates and seeds.
    Ablate(AblateArgs),
    /// Per-frequency posterior spread against the actual error.
    Uncertainty(UncertaintyArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    LongChannel,
    Easy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Ri,
    Ma,
    Db,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=16))]
    ports: Option<u64>,
    #[arg(long)]
    freqs: Option<usize>,
    #[arg(long)]
    pole_pairs: Option<usize>,
    #[arg(long)]
    band_min_hz: Option<f64>,
    #[arg(long)]
    band_max_hz: Option<f64>,
    #[arg(long)]
    damping_min: Option<f64>,
    #[arg(long)]
    damping_max: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    direct_scale: Option<f64>,
    #[arg(long)]
    reciprocal: Option<bool>,
    /// On-disk number format of the written Touchstone file.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug, Default)]
struct FitFlags {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sigma0_sq: Option<f64>,
    #[arg(long)]
    sigma_final_sq: Option<f64>,
    /// Defaults to 75% of the iterations.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Defaults to 1/50 of the post-burn-in window.
    #[arg(long)]
    sample_every: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    sgld_noise: Option<bool>,
    #[arg(long)]
    input_noise: Option<bool>,
    #[arg(long)]
    regularizer: Option<bool>,
    #[arg(long)]
    cel: Option<bool>,
    #[arg(long)]
    split_l1: Option<bool>,
    #[arg(long)]
    sample_noisy_latent: Option<bool>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Observation {
    /// Fraction of the input frequencies to observe, in (0, 1].
    #[arg(long)]
    rate: Option<f64>,
    /// Number of input frequencies to observe.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args, Debug)]
struct FitDipArgs {
    #[command(flatten)]
    common: Common,
    /// Dense Touchstone file to sub-sample.
    #[arg(long)]
    input: PathBuf,
    /// Ground truth for PSNR; defaults to the input.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[command(flatten)]
    observation: Observation,
    #[command(flatten)]
    fit: FitFlags,
    /// PSNR checkpoint interval; 0 disables. Defaults to 1/20 of the iterations.
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Order {
    /// Fixed pole count.
    #[arg(long)]
    poles: Option<usize>,
    /// Choose the pole count on a holdout of the observed samples.
    #[arg(long)]
    auto_k: bool,
}

#[derive(Args, Debug)]
struct FitVfArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[command(flatten)]
    observation: Observation,
    #[command(flatten)]
    order: Order,
    /// Largest pole count tried by `--auto-k`.
    #[arg(long)]
    k_cap: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    fit_e: Option<bool>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated sub-sampling rates.
    #[arg(long)]
    rates: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated methods: dip, vf.
    #[arg(long)]
    methods: Option<String>,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    k_cap: Option<usize>,
    /// Fits run concurrently.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    rates: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    /// Settings of the full method, the top of the ladder.
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct UncertaintyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[command(flatten)]
    observation: Observation,
    #[command(flatten)]
    fit: FitFlags,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::FitDip(a) => commands::fit_dip(a),
        Command::FitVf(a) => commands::fit_vf(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Uncertainty(a) => commands::uncertainty(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
