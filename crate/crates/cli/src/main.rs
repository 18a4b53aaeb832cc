//! `dealias`: corpus generation, training, dealiasing, evaluation,
//! iteration ablation and image export.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::{EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_REGIME};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  configuration error (bad flag, unknown config key, invalid value)
  3  I/O error (missing or malformed file)
  4  numeric failure (non-finite values, divergence, undefined metric)
  5  input outside the single-aliasing regime";

#[derive(Parser, Debug)]
#[command(name = "dealias", version, about = "Color Doppler velocity dealiasing toolkit", after_help = EXIT_CODES)]
struct Cli {
    /// TOML or JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus of DFF frames and a manifest.
    Generate(GenerateArgs),
    /// Train the primal-dual network on a corpus.
    Train(TrainArgs),
    /// Dealias one DFF frame.
    Dealias(DealiasArgs),
    /// Cross-validated evaluation of a method on a corpus.
    Eval(EvalArgs),
    /// Train with several iteration counts under one budget and compare.
    AblateIters(AblateArgs),
    /// Render a frame channel as a binary PPM image.
    ExportImage(ExportArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub aliased_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Radial x angular samples, e.g. 192x40.
    #[arg(long, value_parser = config::parse_grid)]
    pub grid: Option<(usize, usize)>,
    #[arg(long)]
    pub vnyq: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Selected model (best validation epoch).
    #[arg(long)]
    pub out: PathBuf,
    /// Final training state with optimizer moments, for resuming.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Continue from a training state written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after this many completed epochs (the schedule still spans all).
    #[arg(long)]
    pub stop_after: Option<usize>,
    /// Training log as JSON; defaults to `<out>.log.json`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub gradient_check: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum DealiasMethod {
    Pdnet,
    Dean,
    Labels,
}

#[derive(Args, Debug)]
pub struct DealiasArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: DealiasMethod,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub power_floor: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMethod {
    Identity,
    Labels,
    Dean,
    DeanSweep,
    Pdnet,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub method: EvalMethod,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Run a single fold instead of all of them.
    #[arg(long)]
    pub fold: Option<usize>,
    /// Score a trained model on every frame instead of training per fold.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub q: Option<f64>,
    /// Comma-separated Q values for `dean-sweep`.
    #[arg(long, value_delimiter = ',')]
    pub q_values: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub report: PathBuf,
    /// Plain-text table; defaults to the report path with a .txt extension.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub iters: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// One operator set per iteration instead of shared weights.
    #[arg(long)]
    pub per_iteration_weights: bool,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportChannel {
    Velocity,
    Power,
    Labels,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub channel: ExportChannel,
    /// Resample the polar raster onto a Cartesian sector image.
    #[arg(long)]
    pub scan_convert: bool,
    #[arg(long, default_value_t = 320)]
    pub width: usize,
    #[arg(long, default_value_t = 240)]
    pub height: usize,
    /// Velocity at full color saturation; defaults to V_N (wrapped) or 3 V_N.
    #[arg(long)]
    pub velocity_limit: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Info).format_timestamp(None).init();
    let cli = Cli::parse();
    let result = config::RunConfig::load(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Generate(a) => commands::generate(cfg, a),
        Command::Train(a) => commands::train(cfg, a),
        Command::Dealias(a) => commands::dealias(cfg, a),
        Command::Eval(a) => commands::eval(cfg, a),
        Command::AblateIters(a) => commands::ablate(cfg, a),
        Command::ExportImage(a) => commands::export_image(cfg, a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            debug_assert!([EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_REGIME].contains(&f.code));
            ExitCode::from(f.code as u8)
        }
    }
}
