//! `donorspin`: donor spin systems, clock transitions, ESR spectra and
//! T2 decoherence models from the command line.
//!
//! Exit codes: 0 success, 2 usage/config errors, 3 numeric failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use donorspin::clock::Quantity;
use donorspin::Error as CoreError;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config files or input data (exit 2).
    Config(String),
    /// Numeric failure inside the solvers or fitters (exit 3).
    Numeric(String),
}

impl CliError {
    fn config(msg: String) -> Self {
        CliError::Config(msg)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidSystem(_)
            | CoreError::Domain(_)
            | CoreError::Parse(_)
            | CoreError::InvalidData(_)
            | CoreError::Identifiability(_)
            | CoreError::RankDeficient(_)
            | CoreError::NoDecay
            | CoreError::Io(_) => CliError::Config(e.to_string()),
            CoreError::NonConvergence { .. }
            | CoreError::BadProjection { .. }
            | CoreError::TrackingAmbiguity { .. }
            | CoreError::BracketLost { .. }
            | CoreError::StepSizeFailure { .. }
            | CoreError::NoSuchPeak { .. }
            | CoreError::UnresolvedPeak(_)
            | CoreError::FitDiverged { .. }
            | CoreError::NonPhysicalFit(_) => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "donorspin",
    version,
    about = "Donor spin clock transitions, ESR spectra and decoherence models",
    long_about = "Models coupled electron-nuclear donor spins (e.g. Si:Bi), finds \
        magnetic-field and hyperfine clock transitions, synthesizes echo-detected \
        field-sweep spectra, and fits the parametric 1/T2 decoherence model.\n\
        Units everywhere: T, GHz, s, cm^-3."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QuantityArg {
    Dfdb,
    Dfda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum T2Mode {
    Fit,
    Eval,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Microwave frequency (GHz)
    #[arg(long)]
    pub fmw: f64,

    /// Field samples across the range
    #[arg(long, default_value_t = 1001)]
    pub points: usize,

    /// Intrinsic frequency-domain FWHM (GHz); with no width flags the
    /// 270 kHz measured-width preset is used
    #[arg(long = "width-f0")]
    pub width_f0: Option<f64>,

    /// Hyperfine-spread FWHM (GHz), enters as |df/dA|·width
    #[arg(long = "width-a")]
    pub width_a: Option<f64>,

    /// Field-inhomogeneity FWHM (T), enters as |df/dB|·width
    #[arg(long = "width-b")]
    pub width_b: Option<f64>,

    /// Lineshape: gaussian | lorentzian
    #[arg(long, default_value = "gaussian")]
    pub shape: String,
}

#[derive(Debug, Args)]
pub struct T2Args {
    /// fit: least-squares fit of a dataset; eval: evaluate a model
    #[arg(long)]
    pub mode: T2Mode,

    /// Dataset file. Columns (x|b_t), concentration_cm3, t2_s for model
    /// fits; tau_s, amplitude for echo-decay fits. CSV or JSON.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Model JSON (from a previous fit); defaults to the bundled example
    #[arg(long)]
    pub model: Option<PathBuf>,

    /// Normalized slope values |df/dB|/γe for eval mode (repeatable)
    #[arg(long = "x")]
    pub x: Vec<f64>,

    /// Donor concentration (cm⁻³) overriding the model value
    #[arg(long)]
    pub conc: Option<f64>,

    /// Fit each concentration separately instead of shared coefficients
    #[arg(long)]
    pub per_concentration: bool,

    /// Spectrometer frequency (GHz) used to convert field-valued data rows
    /// to normalized slopes
    #[arg(long)]
    pub fmw: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Energy levels and |F,mF> labels over a field grid, branch-tracked
    Levels {
        #[command(flatten)]
        common: config::CommonArgs,
    },
    /// Locate clock transitions (roots of df/dB or df/dA)
    FindCt {
        #[command(flatten)]
        common: config::CommonArgs,
        /// Which derivative to zero
        #[arg(long, value_enum, default_value_t = QuantityArg::Dfdb)]
        quantity: QuantityArg,
    },
    /// Echo-detected field-sweep spectrum at fixed microwave frequency
    Spectrum {
        #[command(flatten)]
        common: config::CommonArgs,
        #[command(flatten)]
        args: SpectrumArgs,
    },
    /// Fit or evaluate the 1/T2 decoherence model; also fits echo decays
    T2 {
        #[command(flatten)]
        common: config::CommonArgs,
        #[command(flatten)]
        args: T2Args,
    },
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Levels { common } => {
            let cfg = config::resolve(&common, 512)?;
            commands::cmd_levels(&cfg)
        }
        Cmd::FindCt { common, quantity } => {
            let cfg = config::resolve(&common, 2048)?;
            let quantity = match quantity {
                QuantityArg::Dfdb => Quantity::DfdB,
                QuantityArg::Dfda => Quantity::DfdA,
            };
            commands::cmd_find_ct(&cfg, quantity)
        }
        Cmd::Spectrum { common, args } => {
            let cfg = config::resolve(&common, 512)?;
            commands::cmd_spectrum(&cfg, &args)
        }
        Cmd::T2 { common, args } => {
            let cfg = config::resolve(&common, 512)?;
            commands::cmd_t2(&cfg, &args)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
