use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod manifest;

use config::{KindArg, TargetArg};

const EXIT_CODES: &str = "\
Exit status:
  0  success
  2  unknown subcommand or flag, bad flag value
  3  file could not be read or written
  4  invalid run configuration
  5  malformed input file (the message names the line)
  6  inconsistent portfolio (duplicate keys, orphan claims, count mismatch)
  7  schema mismatch between a fitted model and the data
  8  invalid model argument (empty data, bad support, unusable folds)
  9  non-convergence or divergence of an estimation";

#[derive(Parser)]
#[command(name = "bonmal", version, about = "Experience rating with Kappa-N and bonus-malus scale models")]
#[command(after_help = EXIT_CODES)]
struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic portfolio with known bonus-malus dynamics.
    #[command(after_help = EXIT_CODES)]
    Simulate(SimulateArgs),
    /// Fit a standard, Kappa-N or BMS model and write the fit with its report.
    #[command(after_help = EXIT_CODES)]
    Fit(Box<FitArgs>),
    /// Tabulate several fits: parameters, log-likelihood, AIC, BIC and test score.
    #[command(after_help = EXIT_CODES)]
    Compare(CompareArgs),
    /// Logarithmic score of a fitted model on a test portfolio.
    #[command(after_help = EXIT_CODES)]
    Score(ScoreArgs),
    /// Relativity and insured-type tables of a fit, or level trajectories of given histories.
    #[command(after_help = EXIT_CODES)]
    Report(ReportArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// JSON simulation spec; defaults apply to missing fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    policies: Option<usize>,
    #[arg(long)]
    years: Option<u32>,
    #[arg(long)]
    base_frequency: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct FitArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    contracts: Option<PathBuf>,
    #[arg(long)]
    claims: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<KindArg>,
    #[arg(long, value_enum)]
    target: Option<TargetArg>,
    #[arg(long)]
    window_years: Option<u32>,
    #[arg(long)]
    min_year: Option<i32>,
    /// Comma-separated covariates offered to the model.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Jump values, e.g. `1..6` or `2,3,4`.
    #[arg(long)]
    psi: Option<String>,
    #[arg(long)]
    l_min: Option<String>,
    #[arg(long)]
    l_max: Option<String>,
    /// Fixed Tweedie variance power.
    #[arg(long)]
    power: Option<f64>,
    /// Select covariates by cross-validated elastic net first.
    #[arg(long)]
    select: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Portfolio the fits were estimated on; their recorded split gives the test set.
    #[arg(long)]
    contracts: PathBuf,
    #[arg(long)]
    claims: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// Fit files written by `fit`.
    #[arg(required = true)]
    fits: Vec<PathBuf>,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    fit: PathBuf,
    /// Test portfolio.
    #[arg(long)]
    contracts: PathBuf,
    #[arg(long)]
    claims: PathBuf,
    /// Optional JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Portfolio for the insured-type table.
    #[arg(long, requires = "claims")]
    contracts: Option<PathBuf>,
    #[arg(long, requires = "contracts")]
    claims: Option<PathBuf>,
    /// CSV of claim histories, one row per insured: `insured,1,2,…`.
    #[arg(long)]
    trajectories: Option<PathBuf>,
    /// Scale for the trajectories when no fit is given.
    #[arg(long)]
    psi: Option<u32>,
    #[arg(long)]
    l_min: Option<i64>,
    #[arg(long)]
    l_max: Option<i64>,
    #[arg(long, default_value_t = bonmal::portfolio::DEFAULT_WINDOW_YEARS)]
    window_years: u32,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Io { path: PathBuf, source: std::io::Error },
    Config(String),
    Core(bonmal::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        use bonmal::Error as E;
        match self {
            CliError::Io { .. } => 3,
            CliError::Config(_) => 4,
            CliError::Core(e) => match e {
                E::Io(_) => 3,
                E::Parse { .. } | E::Csv(_) => 5,
                E::Consistency { .. } => 6,
                E::Schema(_) => 7,
                E::Argument(_) | E::Support(_) | E::FoldAssignment(_) => 8,
                E::NonConvergence { .. } | E::Divergence(_) | E::AllFailed(_) => 9,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<bonmal::Error> for CliError {
    fn from(e: bonmal::Error) -> Self {
        CliError::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Score(a) => commands::score(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bonmal: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
