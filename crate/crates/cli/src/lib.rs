//! Command-line front end. [`dispatch`] runs one subcommand and returns the
//! process exit code: 0 on success, 2 for invalid input, 3 when a protocol
//! run failed.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use analog_shards::learning::{FeatureScale, SigmoidMode, MERSENNE_61};
use analog_shards::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{expand_config, parse_config};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_PROTOCOL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "analog-shards", version, about = "Analog secret sharing: bounds, protocol runs and private training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode values or a CSV matrix into one share file per server.
    #[command(args_override_self = true)]
    Share(ShareArgs),
    /// Decode per-server share or result files.
    #[command(args_override_self = true)]
    Reconstruct(ReconstructArgs),
    /// Evaluate a polynomial on secret inputs through the workers.
    #[command(args_override_self = true)]
    EvalPoly(EvalPolyArgs),
    /// Privacy bounds for one parameter point, as JSON.
    #[command(args_override_self = true)]
    Bounds(BoundsArgs),
    /// Accuracy/privacy trade-off over a noise grid, as CSV.
    #[command(args_override_self = true)]
    Tradeoff(TradeoffArgs),
    /// Train a binary logistic-regression model on MNIST IDX files.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Accuracy against training-set size for all three trainers.
    #[command(args_override_self = true)]
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProtocolArgs {
    /// Number of servers N.
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// Collusion bound t.
    #[arg(long, default_value_t = 1)]
    pub t: usize,
    /// Noise standard deviation sigma_n.
    #[arg(long, visible_alias = "sigma-n", default_value_t = 1e5)]
    pub sigma: f64,
    /// Truncation multiplier alpha.
    #[arg(long, default_value_t = 10.0)]
    pub alpha: f64,
    /// Bound on the secret magnitude.
    #[arg(long, default_value_t = 255.0)]
    pub r: f64,
    #[arg(long, env = "ANALOG_SHARDS_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct TransportArgs {
    /// Comma-separated worker addresses; server i is the i-th entry.
    #[arg(long, value_delimiter = ',', conflicts_with = "simulate")]
    pub workers: Vec<String>,
    /// Run this many workers in-process instead (default: N).
    #[arg(long)]
    pub simulate: Option<usize>,
    /// Seconds to wait for all results of one task.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
    /// Single-threaded arithmetic.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ShareArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Degree D of the function the shares will be used for.
    #[arg(long, default_value_t = 1)]
    pub degree: usize,
    /// Comma-separated secret values (a vector).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required_unless_present = "input")]
    pub secret: Vec<f64>,
    /// CSV file with a numeric matrix (no header).
    #[arg(long, conflicts_with = "secret")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[arg(long, default_value_t = 1)]
    pub degree: usize,
    /// Reads `<prefix>.server1.shares` .. `<prefix>.server<N>.shares`.
    #[arg(long, required_unless_present = "files")]
    pub prefix: Option<PathBuf>,
    /// Share files in server order.
    #[arg(conflicts_with = "prefix")]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalPolyArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub transport: TransportArgs,
    /// Coefficients a_0,a_1,..,a_D.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub coeffs: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub secret: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[arg(long, default_value_t = 255.0)]
    pub r: f64,
    #[arg(long, visible_alias = "sigma-n", default_value_t = 1e5)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1)]
    pub t: usize,
    #[arg(long, default_value_t = 10.0)]
    pub alpha: f64,
    /// Servers for the accuracy bound (default D*t+1).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub degree: usize,
    /// Coefficient mass of the evaluated polynomial.
    #[arg(long, default_value_t = 1.0)]
    pub a_d: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TradeoffArgs {
    #[arg(long, value_delimiter = ',', default_value = "1e5,1e10,1e15")]
    pub sigma_grid: Vec<f64>,
    /// Servers (default D*t+1).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub t: usize,
    #[arg(long, default_value_t = 1)]
    pub degree: usize,
    #[arg(long, default_value_t = 10.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 255.0)]
    pub r: f64,
    #[arg(long, default_value_t = 1.0)]
    pub a_d: f64,
    /// Mantissa bits of the floating-point model.
    #[arg(long, default_value_t = 52)]
    pub v: u32,
    /// Also write the CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainerKind {
    Analog,
    Centralized,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Raw,
    Unit,
}

impl From<ScaleArg> for FeatureScale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Raw => FeatureScale::Raw,
            ScaleArg::Unit => FeatureScale::Unit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SigmoidArg {
    Exact,
    Degree1,
}

impl From<SigmoidArg> for SigmoidMode {
    fn from(s: SigmoidArg) -> Self {
        match s {
            SigmoidArg::Exact => SigmoidMode::Exact,
            SigmoidArg::Degree1 => SigmoidMode::Degree1,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory holding the four MNIST IDX files (optionally gzipped).
    #[arg(long, default_value = "data/mnist")]
    pub mnist_dir: PathBuf,
    /// Digit mapped to label 1, then digit mapped to label 0.
    #[arg(long, value_delimiter = ',', num_args = 1, default_value = "3,7")]
    pub classes: Vec<u8>,
    #[arg(long, value_enum, default_value_t = ScaleArg::Raw)]
    pub scale: ScaleArg,
}

#[derive(Debug, Clone, Args)]
pub struct FixedArgs {
    /// Field modulus (prime).
    #[arg(long, default_value_t = MERSENNE_61)]
    pub prime: u64,
    /// Fixed-point fractional bits.
    #[arg(long, default_value_t = 16)]
    pub frac_bits: u32,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = TrainerKind::Analog)]
    pub trainer: TrainerKind,
    #[command(flatten)]
    pub data: DataArgs,
    /// Balanced training subsample of this many samples (default: all).
    #[arg(long)]
    pub train_size: Option<usize>,
    /// Learning rate (default 1e-6 for raw features, 0.05 for unit scale).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 25)]
    pub k: usize,
    /// Sigmoid of the centralized trainer; the others always use degree 1.
    #[arg(long, value_enum, default_value_t = SigmoidArg::Exact)]
    pub sigmoid: SigmoidArg,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub transport: TransportArgs,
    #[command(flatten)]
    pub fixed: FixedArgs,
    /// Share without masking noise (exactness check).
    #[arg(long)]
    pub zero_noise: bool,
    /// Record the observed decoding error of every product.
    #[arg(long)]
    pub track_drift: bool,
    /// Writes `<prefix>.report.json` and `<prefix>.curve.csv`.
    #[arg(long)]
    pub out_prefix: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "10,20,50,100,200,500,1000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 15)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = SigmoidArg::Degree1)]
    pub sigmoid: SigmoidArg,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub fixed: FixedArgs,
    #[arg(long)]
    pub sequential: bool,
    /// Writes `<prefix>.curve.csv` and `<prefix>.report.json`.
    #[arg(long)]
    pub out_prefix: Option<PathBuf>,
}

/// Exit code for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<Error>() {
        Some(Error::Protocol(_) | Error::Transport(_) | Error::SamplingExhausted { .. }) => EXIT_PROTOCOL,
        _ => EXIT_INVALID,
    }
}

/// Parses `argv` (program name first) and runs the subcommand, writing
/// results to `out`.
pub fn dispatch_to<I, T>(argv: I, out: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv = match expand_config(argv.into_iter().map(Into::into).collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_INVALID;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match commands::run(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    dispatch_to(argv, &mut std::io::stdout().lock())
}
