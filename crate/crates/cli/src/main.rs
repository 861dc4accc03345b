//! `mpc-calib`: simulate, calibrate, evaluate and rectify light field
//! calibration data from the command line.
//!
//! Exit codes: 0 ok, 2 bad input file or config, 3 I/O, 4 calibration
//! failure, 5 result and dataset disagree.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mpc_calib::{CameraKind, Error};

#[derive(Debug, Parser)]
#[command(name = "mpc-calib", version, about = "Multi-projection-center light field camera calibration")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Random seed; overrides the config seed. Only `simulate` draws random numbers.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its ground-truth sidecar.
    Simulate(SimulateArgs),
    /// Calibrate from a dataset and write a result file.
    Calibrate(CalibrateArgs),
    /// Write the metric CSV of a result on a dataset.
    Evaluate(EvaluateArgs),
    /// Undistort every observation with a result's distortion.
    Rectify(RectifyArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Simulation config (JSON).
    config: PathBuf,
    /// Dataset output path.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth output path [default: <out>.truth.json].
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Conventional,
    FocusedLongPath,
    FocusedShortPath,
}

impl From<KindArg> for CameraKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Conventional => CameraKind::Conventional,
            KindArg::FocusedLongPath => CameraKind::FocusedLongPath,
            KindArg::FocusedShortPath => CameraKind::FocusedShortPath,
        }
    }
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    dataset: PathBuf,
    /// Result output path.
    #[arg(long)]
    out: PathBuf,
    /// Override the dataset's camera kind.
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Stop after the closed-form stage; no distortion is estimated.
    #[arg(long)]
    skip_refine: bool,
    /// Refine intrinsics and poses only, keeping distortion at zero.
    #[arg(long, conflicts_with = "skip_refine")]
    no_distortion: bool,
    /// Maximum optimizer iterations.
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Relative cost decrease at which the optimizer stops.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    result: PathBuf,
    dataset: PathBuf,
    /// Ground-truth file; adds relative-error rows per intrinsic.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// CSV output path [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RectifyArgs {
    result: PathBuf,
    dataset: PathBuf,
    /// Rectified dataset output path.
    #[arg(long)]
    out: PathBuf,
}

/// Innermost error under the pose/observation wrappers.
fn root(e: &Error) -> &Error {
    match e {
        Error::AtPose { source, .. } | Error::AtObservation { source, .. } => root(source),
        other => other,
    }
}

fn exit_code(e: &Error) -> u8 {
    match root(e) {
        Error::Parse(_) | Error::ConfigInvalid(_) | Error::InvalidDataset(_) => 2,
        Error::Io { .. } => 3,
        Error::Inconsistent(_) => 5,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    let outcome = match &cli.command {
        Command::Simulate(a) => commands::simulate(&a.config, &a.out, a.truth.as_deref(), cli.seed),
        Command::Calibrate(a) => {
            let options = mpc_calib::CalibrateOptions {
                kind: a.kind.map(Into::into),
                skip_refine: a.skip_refine,
                estimate_distortion: !a.no_distortion,
                lm: mpc_calib::LmOptions { max_iter: a.max_iter, ftol: a.tol, ..Default::default() },
            };
            commands::calibrate(&a.dataset, &a.out, &options)
        }
        Command::Evaluate(a) => commands::evaluate(&a.result, &a.dataset, a.truth.as_deref(), a.out.as_deref()),
        Command::Rectify(a) => commands::rectify(&a.result, &a.dataset, &a.out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
