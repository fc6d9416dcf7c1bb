//! `sqkd` command-line front end.

mod analysis;
mod manifest;
mod output;
mod simulate;

use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use manifest::RunManifest;
pub use output::{round_floats, to_json};

pub const EXIT_OK: u8 = 0;
pub const EXIT_MALFORMED: u8 = 1;
pub const EXIT_ABORT: u8 = 2;
pub const EXIT_SYMMETRY: u8 = 3;
pub const EXIT_VIOLATION: u8 = 4;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "SQKD_THREADS";

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn malformed(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_MALFORMED,
            message: message.into(),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::malformed(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::malformed(format!("io error: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "sqkd", version, about = "Mediated semi-quantum key distribution: simulation and key-rate analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Run the protocol from a JSON config and post-process the raw key.
    Simulate(SimulateArgs),
    /// Emit a key-rate curve over a grid of Q values.
    Keyrate(KeyrateArgs),
    /// Locate the largest Q with a non-negative key rate.
    Threshold(ThresholdArgs),
    /// Check the information bounds against exact values for random attacks.
    VerifyBounds(VerifyArgs),
    /// Re-run a command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Keyrate(_) => "keyrate",
            Command::Threshold(_) => "threshold",
            Command::VerifyBounds(_) => "verify-bounds",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Protocol config (JSON).
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Symmetry test threshold in standard errors.
    #[arg(long, default_value_t = 4.0)]
    pub z_sigma: f64,
    /// Rate formula used to size the final key.
    #[arg(long, value_enum, default_value_t = RateModel::Auto)]
    pub rate_model: RateModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateModel {
    /// Semi-honest for honest and semi-honest servers, worst-low otherwise.
    Auto,
    SemiHonest,
    WorstLow,
    WorstHigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// Depolarizing channels with forward strength p = 2Q.
    SemiHonest,
    WorstLow,
    WorstHigh,
}

/// A model parameter either tied to the grid variable or held fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Param {
    Tied,
    Fixed(f64),
}

impl Param {
    pub fn resolve(self, tied: f64) -> f64 {
        match self {
            Param::Tied => tied,
            Param::Fixed(v) => v,
        }
    }
}

impl FromStr for Param {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "Q" | "q" | "p" => Ok(Param::Tied),
            _ => s
                .parse::<f64>()
                .map(Param::Fixed)
                .map_err(|_| format!("expected a number or the tie token, got {s:?}")),
        }
    }
}

impl Serialize for Param {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Param::Tied => s.serialize_str("tied"),
            Param::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    /// `-1` rate given both measured (worst-case models).
    #[arg(long, default_value_t = 0.5)]
    pub pa: f64,
    /// `-1` rate given both reflected: `Q` ties it to the grid, or a number.
    #[arg(long, default_value = "Q")]
    pub pw: Param,
    /// Sifted-key error rate for worst-low: `Q` or a number.
    #[arg(long, default_value = "Q")]
    pub qz: Param,
    /// Reverse depolarization for semi-honest: `p` ties it to the forward strength.
    #[arg(long, default_value = "p")]
    pub reverse: Param,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=count).map(|k| self.lo + k as f64 * self.step).collect()
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, step] = parts.as_slice() else {
            return Err(format!("expected lo:hi:step, got {s:?}"));
        };
        let num = |x: &str| x.parse::<f64>().map_err(|_| format!("not a number: {x:?}"));
        let g = Grid {
            lo: num(lo)?,
            hi: num(hi)?,
            step: num(step)?,
        };
        let valid = g.step > 0.0 && g.lo >= 0.0 && g.lo <= g.hi && g.hi <= 1.0;
        if !valid {
            return Err(format!("grid {s:?} needs 0 <= lo <= hi <= 1 and step > 0"));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Args)]
pub struct KeyrateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "0:0.3:0.001")]
    pub q_grid: Grid,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.0)]
    pub lo: f64,
    #[arg(long, default_value_t = 0.3)]
    pub hi: f64,
    /// Output JSON; also printed to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Number of random attacks.
    #[arg(long, default_value_t = 1000)]
    pub samples: u64,
    /// Ancilla dimensions, cycled over the samples.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub dc: Vec<usize>,
    /// Mismatch rates at which each attack is evaluated.
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1")]
    pub q: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Check a single attack-spec file instead of sampling.
    #[arg(long)]
    pub attack_file: Option<PathBuf>,
    /// Slack allowed on each inequality.
    #[arg(long, default_value_t = 1e-9, allow_negative_numbers = true)]
    pub tol: f64,
    /// Report JSON; also printed to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to save the first violating attack.
    #[arg(long)]
    pub violation_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// New output location (directory for simulate, file otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Compare the regenerated outputs byte for byte with the recorded ones.
    #[arg(long)]
    pub check: bool,
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::malformed(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        // a pool may already exist when called in-process more than once
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Executes a parsed command; `args` is the argument list recorded in manifests.
pub fn execute(command: Command, args: Vec<String>) -> CliResult<u8> {
    match command {
        Command::Simulate(a) => simulate::run(&a, args),
        Command::Keyrate(a) => analysis::keyrate(&a, args),
        Command::Threshold(a) => analysis::threshold(&a, args),
        Command::VerifyBounds(a) => analysis::verify_bounds(&a, args),
        Command::Replay(a) => manifest::replay(&a),
    }
}

/// Entry point: parses `argv` (including the program name) and returns the
/// process exit code.
pub fn main_with_args<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_MALFORMED } else { EXIT_OK };
        }
    };
    let args = argv.iter().skip(1).map(|s| s.to_string_lossy().into_owned()).collect();
    let result = configure_threads().and_then(|_| execute(cli.command, args));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
