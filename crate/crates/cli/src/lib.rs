//! Command-line front end: data generation and normalization, descriptive
//! statistics, sub-sampling, intensity fits and simulation studies.

mod commands;
mod fit;
mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use output::{RunConfig, VERSION};

pub const OUT_DIR_ENV: &str = "RAC_INTENSITY_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] rac_intensity::Error),

    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) | CliError::Io { .. } => EXIT_DATA,
            CliError::Core(e) if e.is_data_error() => EXIT_DATA,
            CliError::Core(_) => EXIT_CONVERGENCE,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_USAGE => "usage",
            EXIT_CONVERGENCE => "convergence",
            _ => "data",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rac-intensity", version = VERSION, about = "Intensity estimation for randomly acquired characteristics on shoe soles")]
pub struct Cli {
    /// Directory receiving all output files.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "rac-intensity-out")]
    pub out_dir: PathBuf,

    /// Seed for every random choice of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Print progress to stderr; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit intensity estimators to standardized shoes.
    Fit(FitArgs),
    /// Run a simulation scenario and write bias/MSE tables.
    Simulate(SimulateArgs),
    /// Write a synthetic data set of standardized shoes.
    Generate(GenerateArgs),
    /// Draw a case-control sub-sample of contact pixels.
    Subsample(SubsampleArgs),
    /// Descriptive statistics of a shoe data set.
    Stats(StatsArgs),
    /// Map marked lab prints onto the standardized grid.
    Normalize(NormalizeArgs),
    /// Write the built-in simulation scenarios as JSON files.
    Scenarios(ScenariosArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Simulate(_) => "simulate",
            Command::Generate(_) => "generate",
            Command::Subsample(_) => "subsample",
            Command::Stats(_) => "stats",
            Command::Normalize(_) => "normalize",
            Command::Scenarios(_) => "scenarios",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Naive,
    Re,
    Cml,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorArg {
    Gamma,
    Lognormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeArg {
    Full,
    Random,
    CcPooled,
    CcWithinPropSize,
    CcWithinPropCases,
}

impl SchemeArg {
    fn scheme(self) -> rac_intensity::subsampling::Scheme {
        use rac_intensity::subsampling::Scheme;
        match self {
            SchemeArg::Full => Scheme::Full,
            SchemeArg::Random => Scheme::Random,
            SchemeArg::CcPooled => Scheme::CcPooled,
            SchemeArg::CcWithinPropSize => Scheme::CcWithinPropSize,
            SchemeArg::CcWithinPropCases => Scheme::CcWithinPropCases,
        }
    }
}

/// Control budget of a sub-sample; at most one may be given.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ControlArgs {
    /// Controls per shoe.
    #[arg(long, conflicts_with_all = ["controls_per_case", "total_controls"])]
    pub controls: Option<usize>,
    /// Controls per case.
    #[arg(long, conflicts_with = "total_controls")]
    pub controls_per_case: Option<f64>,
    /// Total number of controls over all shoes.
    #[arg(long)]
    pub total_controls: Option<usize>,
}

impl ControlArgs {
    fn allocation(&self) -> rac_intensity::subsampling::Allocation {
        use rac_intensity::subsampling::Allocation;
        match (self.controls, self.controls_per_case, self.total_controls) {
            (_, Some(k), _) => Allocation::PerCase(k),
            (_, _, Some(b)) => Allocation::Total(b),
            (Some(c), _, _) => Allocation::PerShoe(c),
            _ => Allocation::PerShoe(fit::DEFAULT_CONTROLS),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// Shoe file (`.json` or CSV).
    #[arg(long, short)]
    pub input: PathBuf,
    /// Grid of the shoes, HEIGHTxWIDTH.
    #[arg(long, default_value = "397x307")]
    pub grid: String,
    /// `pixel`, `expert`, `grid:BANDSxCOLUMNS`, or `file` (with --layout).
    #[arg(long, default_value = "expert")]
    pub partition: String,
    /// Region layout JSON for the expert partition.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    pub method: MethodArg,
    /// Wear-factor prior of the region random-effects fit.
    #[arg(long, value_enum, default_value = "gamma")]
    pub prior: PriorArg,
    /// Sub-sampling scheme of the pixel spline fits.
    #[arg(long, value_enum, default_value = "cc-within-prop-cases")]
    pub subsample: SchemeArg,
    #[command(flatten)]
    pub controls: ControlArgs,
    #[arg(long, default_value_t = rac_intensity::spline::DEFAULT_KNOTS_X)]
    pub knots_x: usize,
    #[arg(long, default_value_t = rac_intensity::spline::DEFAULT_KNOTS_Y)]
    pub knots_y: usize,
    #[arg(long, default_value_t = rac_intensity::pixel::DEFAULT_QUADRATURE_ORDER)]
    pub quadrature: usize,
    /// Half-width of the moving-average window for the naive pixel surface.
    #[arg(long, default_value_t = rac_intensity::pixel::DEFAULT_HALF_WIDTH)]
    pub half_width: usize,
    /// Confidence level of the reported intervals.
    #[arg(long)]
    pub ci: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Scenario JSON file or the id of a built-in scenario.
    #[arg(long)]
    pub scenario: String,
    /// Number of replications, overriding the scenario.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Use the scenario's full replication count and dimensions.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ALawArg {
    Gamma,
    Constant,
    Uniform,
    ShiftedBernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaArg {
    Uniform,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 386)]
    pub shoes: usize,
    /// Expected RAC total of an average shoe.
    #[arg(long, default_value_t = 34.0)]
    pub avg_racs: f64,
    /// Mean fraction of the sole in contact; 1 gives identical full soles.
    #[arg(long, default_value_t = 0.6)]
    pub coverage: f64,
    /// Half-width of the per-shoe coverage spread.
    #[arg(long)]
    pub coverage_spread: Option<f64>,
    #[arg(long, default_value = "397x307")]
    pub grid: String,
    #[arg(long, value_enum, default_value = "baseline")]
    pub lambda: LambdaArg,
    #[arg(long, value_enum, default_value = "gamma")]
    pub a_law: ALawArg,
    /// Variance of the gamma wear law.
    #[arg(long, default_value_t = 0.25)]
    pub a_var: f64,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
    /// Base name of the data file.
    #[arg(long, default_value = "shoes")]
    pub name: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SubsampleArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, default_value = "397x307")]
    pub grid: String,
    #[arg(long, value_enum, default_value = "cc-within-prop-cases")]
    pub scheme: SchemeArg,
    #[command(flatten)]
    pub controls: ControlArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, default_value = "397x307")]
    pub grid: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NormalizeArgs {
    /// Marked prints as JSON.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, default_value = "397x307")]
    pub grid: String,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScenariosArgs {
    /// Only write the scenario with this id.
    #[arg(long)]
    pub only: Option<String>,
}

/// Files written by a successful command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
}

pub fn execute(cli: Cli) -> Result<Outcome, CliError> {
    let out_dir = output::absolute(&cli.out_dir)?;
    let ctx = commands::Context {
        out_dir,
        seed: cli.seed,
        verbose: cli.verbose,
        command: cli.command.name(),
    };
    match cli.command {
        Command::Fit(a) => fit::run(&ctx, a),
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Generate(a) => commands::generate(&ctx, a),
        Command::Subsample(a) => commands::subsample(&ctx, a),
        Command::Stats(a) => commands::stats(&ctx, a),
        Command::Normalize(a) => commands::normalize(&ctx, a),
        Command::Scenarios(a) => commands::scenarios(&ctx, a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let verbose = cli.verbose;
    match execute(cli) {
        Ok(out) => {
            if verbose > 0 {
                for f in &out.files {
                    eprintln!("wrote {}", f.display());
                }
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            e.exit_code()
        }
    }
}
