use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use twin_core::ErrorKind;

mod commands;
mod manifest;
mod plot;

#[derive(Parser)]
#[command(name = "twin", version, about = "Calibrate, plan and fly a probabilistic digital twin of a UAV wing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Offline calibration experiments.
    #[command(subcommand)]
    Calibrate(CalibrateCmd),
    /// Solve the health-aware maneuver MDP.
    Plan(PlanArgs),
    /// Fly a closed-loop mission against a simulated asset.
    Simulate(SimulateArgs),
    /// Synthetic inputs and default files.
    #[command(subcommand)]
    Gen(GenCmd),
}

#[derive(Subcommand)]
pub enum CalibrateCmd {
    /// Replace the geometry prior by measured values.
    Geometry(GeometryArgs),
    /// Particle-filter update of the modulus scale from load-displacement pairs.
    Stiffness(StiffnessArgs),
    /// Point masses and Rayleigh damping from ring-down experiments.
    Modal(ModalArgs),
}

#[derive(Args)]
pub struct GeometryArgs {
    /// Measured geometry JSON (semi_span_mm, chord_root_mm, chord_tip_mm).
    #[arg(long)]
    pub measured: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct StiffnessArgs {
    /// CSV with columns applied_mass_g, tip_displacement_mm.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long)]
    pub kde_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ModalArgs {
    /// Stiffness posterior JSON.
    #[arg(long)]
    pub posterior: PathBuf,
    /// Modal estimates JSON (array of {omega_hz, zeta}).
    #[arg(long, conflicts_with = "ringdown", required_unless_present = "ringdown")]
    pub estimates: Option<PathBuf>,
    /// Ring-down CSVs (time_s, strain_microstrain); repeat per experiment.
    #[arg(long)]
    pub ringdown: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the discount factor from the config.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum TransportArg {
    Inproc,
    Socket,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ground-truth schedule JSON; defaults to the shipped 50-step mission.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = TransportArg::Inproc)]
    pub transport: TransportArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Also render SVG plots of the mission.
    #[arg(long)]
    pub plot: bool,
    /// Stamp each log record with elapsed wall time (output is then not reproducible).
    #[arg(long)]
    pub wall_time: bool,
}

#[derive(Subcommand)]
pub enum GenCmd {
    /// Noisy load-displacement pairs for a wing of known modulus scale.
    Pairs(GenPairsArgs),
    /// Two-mode free-decay strain record.
    Ringdown(GenRingdownArgs),
    /// The shipped ground-truth schedule.
    Schedule(GenOut),
    /// The shipped experiment configuration.
    Config(GenConfigArgs),
}

#[derive(Args)]
pub struct GenOut {
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct GenPairsArgs {
    #[arg(long, default_value_t = 1.0073)]
    pub e_true: f64,
    #[arg(long, default_value_t = 2)]
    pub trials: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [250.0, 500.0, 750.0, 1000.0])]
    pub masses: Vec<f64>,
    /// 95% half-width of the applied load, in grams.
    #[arg(long, default_value_t = 10.0)]
    pub force_ci95_g: f64,
    /// 95% half-width of the displacement reading, in mm.
    #[arg(long, default_value_t = 1.0)]
    pub displacement_ci95_mm: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: GenOut,
}

#[derive(Args)]
pub struct GenRingdownArgs {
    /// Damped frequencies, Hz.
    #[arg(long, default_value_t = 7.0)]
    pub f1: f64,
    #[arg(long, default_value_t = 43.0)]
    pub f2: f64,
    /// Amplitudes, microstrain.
    #[arg(long, default_value_t = 200.0)]
    pub a1: f64,
    #[arg(long, default_value_t = 60.0)]
    pub a2: f64,
    /// Decay rates, 1/s.
    #[arg(long, default_value_t = 0.6)]
    pub b1: f64,
    #[arg(long, default_value_t = 2.5)]
    pub b2: f64,
    /// Time offsets, s.
    #[arg(long, default_value_t = 0.0)]
    pub c1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub c2: f64,
    #[arg(long, default_value_t = 2.0)]
    pub seconds: f64,
    #[arg(long, default_value_t = 2000.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: GenOut,
}

#[derive(Args)]
pub struct GenConfigArgs {
    /// Emit only the surrogate section.
    #[arg(long)]
    pub surrogate_only: bool,
    #[command(flatten)]
    pub out: GenOut,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn env(message: impl Into<String>) -> Self {
        CliError { code: 4, message: message.into() }
    }
}

impl From<twin_core::Error> for CliError {
    fn from(e: twin_core::Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Input => 2,
            ErrorKind::Numeric => 3,
            ErrorKind::Environment => 4,
        };
        CliError { code, message: e.to_string() }
    }
}

/// `TWIN_SEED`, when set, wins over `--seed`.
pub fn effective_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var("TWIN_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| CliError::usage(format!("TWIN_SEED must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(flag),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate(CalibrateCmd::Geometry(a)) => commands::calibrate_geometry(a),
        Command::Calibrate(CalibrateCmd::Stiffness(a)) => commands::calibrate_stiffness(a),
        Command::Calibrate(CalibrateCmd::Modal(a)) => commands::calibrate_modal(a),
        Command::Plan(a) => commands::plan(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Gen(g) => commands::gen(g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
