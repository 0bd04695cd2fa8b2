//! `flashlab`: exit code 0 on success, 1 on usage errors, 2 on runtime errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "flashlab", version, about = "Intrinsic flash photography toolkit")]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for data-parallel work (0 = available cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic dataset with exact intrinsic ground truth.
    Synth(SynthArgs),
    /// Train a decomposition, generation or sr network.
    Train(TrainArgs),
    /// Compute PSNR/SSIM of a checkpoint on one dataset split.
    Eval(EvalArgs),
    /// Separate a flash photograph into ambient and flash illumination.
    Decompose(DecomposeArgs),
    /// Synthesize a flash photograph from a no-flash image.
    Generate(GenerateArgs),
    /// Re-render a decomposed scene with new flash and ambient settings.
    Relight(RelightArgs),
    /// Upsample a low-resolution ambient estimate guided by the full photograph.
    Sr(SrArgs),
    /// Serve the HTTP API over a dataset root.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    /// Square image resolution.
    #[arg(long, default_value_t = 64)]
    pub res: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Decomposition,
    Generation,
    Sr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// Dataset root.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoints, losses.csv and report.json.
    #[arg(long)]
    pub ckpt_out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    /// Trained decomposition checkpoint (required for generation).
    #[arg(long, required_if_eq("task", "generation"))]
    pub decomposer: Option<PathBuf>,
    /// Base channel width.
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    /// Downsampling levels.
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    /// Write epoch_XXXX.ckpt every this many epochs (0 disables).
    #[arg(long, default_value_t = 10)]
    pub checkpoint_every: usize,
    /// Train generation without the cycle term.
    #[arg(long)]
    pub no_cycle: bool,
    /// Low resolution for the sr task.
    #[arg(long, default_value_t = 64)]
    pub sr_low_res: usize,
    /// Square training crop for the sr task (0 = whole images).
    #[arg(long, default_value_t = 64)]
    pub sr_crop: usize,
    /// Cap on training scenes (0 = all).
    #[arg(long, default_value_t = 0)]
    pub max_train: usize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Metrics JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

/// A scene from a dataset, or explicit guide-map files.
#[derive(Args, Debug)]
pub struct SourceArgs {
    /// Dataset root holding --scene.
    #[arg(long, requires = "scene")]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub scene: Option<String>,
    /// Albedo PFM (with explicit inputs).
    #[arg(long, conflicts_with = "scene")]
    pub albedo: Option<PathBuf>,
    /// Normals PFM (with explicit inputs).
    #[arg(long, conflicts_with = "scene")]
    pub normals: Option<PathBuf>,
    /// Depth PFM (with explicit inputs).
    #[arg(long, conflicts_with = "scene")]
    pub depth: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub source: SourceArgs,
    /// Flash photograph PFM (with explicit inputs).
    #[arg(long, conflicts_with = "scene")]
    pub input: Option<PathBuf>,
    /// Output directory for S_A, S_F, R, A, F and meta.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub source: SourceArgs,
    /// White-balanced no-flash PFM (with explicit inputs).
    #[arg(long, conflicts_with = "scene")]
    pub no_flash: Option<PathBuf>,
    /// Ambient temperature of the no-flash image (with explicit inputs).
    #[arg(long, conflicts_with = "scene")]
    pub kelvin: Option<f64>,
    /// Output directory for F.pfm and P.pfm.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RelightArgs {
    /// Dataset root holding --scene.
    #[arg(long, default_value = ".")]
    pub data: PathBuf,
    #[arg(long, required_unless_present = "decomposition")]
    pub scene: Option<String>,
    /// A saved decomposition directory instead of a dataset scene.
    #[arg(long, conflicts_with = "scene")]
    pub decomposition: Option<PathBuf>,
    /// Flash strength.
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    /// Ambient strength.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Target ambient temperature.
    #[arg(long)]
    pub kelvin: f64,
    /// Output image (.png, or .pfm for linear values).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SrArgs {
    /// Full-resolution flash photograph PFM.
    #[arg(long)]
    pub input: PathBuf,
    /// Low-resolution ambient estimate PFM.
    #[arg(long)]
    pub lowres: PathBuf,
    /// Trained sr checkpoint; omitted = pass-through upsampled ratio.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Full-resolution ambient PFM to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the refined ratio image as PFM.
    #[arg(long)]
    pub ratio_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Dataset root.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, default_value_t = 8787)]
    pub port: u16,
    /// Static editor bundle served outside /api.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(commands::CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
