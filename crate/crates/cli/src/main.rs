//! `cstn`: synthesize scenes, train, detect changes, export translations and
//! score results.
//!
//! Exit codes: 0 success, 1 file I/O, 2 usage or validation, 3 numerical
//! failure such as training divergence.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "cstn", version, about = "Unsupervised multimodal change detection")]
struct Cli {
    /// Flat `key = value` settings file; flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Threads for per-sample gradients; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic optical/SAR-like pair with ground truth.
    Synth(SynthArgs),
    /// Fit the networks to an image pair.
    Train(TrainArgs),
    /// Difference image and change map from a trained checkpoint.
    Detect(DetectArgs),
    /// Export both cross-domain translations of a pair.
    Translate(TranslateArgs),
    /// Accuracy, curve and distribution metrics.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Side length of the square scene.
    #[arg(long)]
    size: Option<usize>,
    /// Target share of changed pixels, in (0, 0.5).
    #[arg(long)]
    change: Option<f64>,
}

#[derive(Args, Debug)]
struct PairArgs {
    /// Pre-event image (PNG, TIFF or raw container).
    #[arg(long)]
    x: PathBuf,
    /// Post-event image of the other modality.
    #[arg(long)]
    y: PathBuf,
    /// Resample both images to `HxW` on load.
    #[arg(long)]
    resample: Option<String>,
    /// Keep raw sample values instead of min–max scaling each channel.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    content: Option<usize>,
    #[arg(long)]
    style: Option<usize>,
    #[arg(long)]
    ffb: Option<usize>,
    #[arg(long)]
    mlp_hidden: Option<usize>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    /// Epochs per mask iteration.
    #[arg(long)]
    epochs: Option<usize>,
    /// Number of mask iterations.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    no_augment: bool,
    /// Loss terms to switch off: recon, trans, cyc, align.
    #[arg(long, value_delimiter = ',')]
    disable: Vec<String>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Threshold the unsmoothed difference image.
    #[arg(long)]
    no_filter: bool,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    kernel: Option<usize>,
}

#[derive(Args, Debug)]
struct TranslateArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Also write the images translated there and back again.
    #[arg(long)]
    cycle: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Binary change map PNG.
    #[arg(long)]
    cm: Option<PathBuf>,
    /// Binary ground-truth PNG.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Difference image written by `detect`.
    #[arg(long)]
    di: Option<PathBuf>,
    /// Confusion counts `TP,FP,TN,FN` instead of maps.
    #[arg(long)]
    counts: Option<String>,
    /// Reference images for FID/KID.
    #[arg(long, num_args = 1..)]
    real: Vec<PathBuf>,
    /// Translated images for FID/KID.
    #[arg(long, num_args = 1..)]
    translated: Vec<PathBuf>,
    #[arg(long)]
    extractor: Option<String>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(cstn::Error),
}

impl From<cstn::Error> for CliError {
    fn from(e: cstn::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.0)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_io() => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn apply_pair(cfg: &mut RunConfig, pair: &PairArgs) -> Result<(), CliError> {
    if let Some(r) = &pair.resample {
        cfg.resample = Some(config::parse_dims(r).map_err(|e| CliError::Usage(format!("--resample: {e}")))?);
    }
    if pair.no_normalize {
        cfg.normalize = false;
    }
    Ok(())
}

fn settings(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    macro_rules! take {
        ($($src:expr => $dst:ident),* $(,)?) => {{
            $(if let Some(v) = $src.clone() { cfg.$dst = v; })*
        }};
    }
    take!(cli.seed => seed, cli.workers => workers);
    match &cli.command {
        Command::Synth(a) => take!(a.size => size, a.change => change),
        Command::Train(a) => {
            apply_pair(&mut cfg, &a.pair)?;
            take!(
                a.content => content, a.style => style, a.ffb => ffb, a.mlp_hidden => mlp_hidden,
                a.patch => patch, a.stride => stride, a.lr => lr, a.batch => batch,
                a.epochs => epochs, a.iterations => iterations,
            );
            if a.no_augment {
                cfg.augment = false;
            }
            if !a.disable.is_empty() {
                cfg.set("disable", &a.disable.join(","))?;
            }
        }
        Command::Detect(a) => {
            apply_pair(&mut cfg, &a.pair)?;
            take!(a.sigma => sigma, a.kernel => kernel);
            if a.no_filter {
                cfg.filter = false;
            }
        }
        Command::Translate(a) => apply_pair(&mut cfg, &a.pair)?,
        Command::Evaluate(a) => take!(a.extractor => extractor),
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = settings(cli)?;
    let out = cli
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;
    match &cli.command {
        Command::Synth(_) => commands::synth(&cfg, &out),
        Command::Train(a) => commands::train(&cfg, &a.pair.x, &a.pair.y, &out),
        Command::Detect(a) => commands::detect(&cfg, &a.pair.x, &a.pair.y, &a.checkpoint, &out),
        Command::Translate(a) => {
            commands::translate(&cfg, &a.pair.x, &a.pair.y, &a.checkpoint, a.cycle, &out)
        }
        Command::Evaluate(a) => commands::evaluate(
            &cfg,
            &commands::EvalInputs {
                cm: a.cm.clone(),
                gt: a.gt.clone(),
                di: a.di.clone(),
                counts: a.counts.clone(),
                real: a.real.clone(),
                translated: a.translated.clone(),
            },
            &out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
