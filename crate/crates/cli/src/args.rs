use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flowsim::Mode;

#[derive(Debug, Parser)]
#[command(name = "flowsim", version, about = "Mollified Brownian flows and their coalescing limit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the n-point motion and write paths.csv.
    Flow(FlowArgs),
    /// Simulate coalescing Brownian motion and write summary.json.
    Coalesce(CoalesceArgs),
    /// Wasserstein distance between two measures; writes plan.csv and result.json.
    Wasserstein(WassersteinArgs),
    /// Run the statistical checks on one flow ensemble; writes report.json.
    Diagnose(DiagnoseArgs),
    /// Sweep ε towards the coalescing limit; writes report.json and sweep.csv.
    Converge(ConvergeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Covariance,
    Field,
    Independent,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Covariance => Mode::Covariance,
            ModeArg::Field => Mode::Field,
            ModeArg::Independent => Mode::Independent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum CheckName {
    Qv,
    Joint,
    Marginal,
    Holder,
    Moment,
    Tail,
    Stopped,
}

impl CheckName {
    pub fn key(self) -> &'static str {
        match self {
            CheckName::Qv => "qv",
            CheckName::Joint => "joint",
            CheckName::Marginal => "marginal",
            CheckName::Holder => "holder",
            CheckName::Moment => "moment",
            CheckName::Tail => "tail",
            CheckName::Stopped => "stopped",
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Base seed; every replica gets its own stream derived from it.
    #[arg(long)]
    pub seed: u64,
    /// Worker threads. Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Ensemble {
    /// Time steps on [0, 1]; h = 1/steps.
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1000)]
    pub replicas: usize,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct FlowArgs {
    #[arg(long)]
    pub eps: f64,
    /// Comma-separated start points.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required_unless_present = "mu0")]
    pub starts: Vec<f64>,
    /// Initial measure whose atoms become the start points.
    #[arg(long, conflicts_with = "starts")]
    pub mu0: Option<String>,
    #[command(flatten)]
    pub ensemble: Ensemble,
    #[arg(long, value_enum, default_value_t = ModeArg::Covariance)]
    pub mode: ModeArg,
    /// Record every k-th step.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct CoalesceArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub starts: Vec<f64>,
    #[command(flatten)]
    pub ensemble: Ensemble,
    /// Also write paths.csv, recording every k-th step.
    #[arg(long)]
    pub paths_stride: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct WassersteinArgs {
    /// Source measure: a measure CSV path or inline atoms `x[:w],…`.
    #[arg(long, allow_hyphen_values = true)]
    pub mu0: String,
    /// Target measure, same formats.
    #[arg(long, allow_hyphen_values = true)]
    pub nu: String,
    /// Cost order n (0 is the bounded cost).
    #[arg(long, default_value_t = 1)]
    pub order: u32,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub eps: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required_unless_present = "mu0")]
    pub starts: Vec<f64>,
    #[arg(long, conflicts_with = "starts")]
    pub mu0: Option<String>,
    #[command(flatten)]
    pub ensemble: Ensemble,
    #[arg(long, value_enum, default_value_t = ModeArg::Covariance)]
    pub mode: ModeArg,
    /// Checks to run; all applicable ones by default.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub checks: Vec<CheckName>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct ConvergeArgs {
    /// Decreasing list of ε values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub eps_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0.0, 1.0])]
    pub starts: Vec<f64>,
    #[command(flatten)]
    pub ensemble: Ensemble,
    #[arg(long, value_enum, default_value_t = ModeArg::Covariance)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = flowsim::stats::DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
    /// Also estimate the moment functional (μ0 uniform on {0, 0.2},
    /// clip(·, ±5) at t = 0.5 and 1).
    #[arg(long)]
    pub functional: bool,
    /// Steps for the functional ensembles; defaults to --steps.
    #[arg(long, requires = "functional")]
    pub functional_steps: Option<usize>,
    /// Replicas for the functional ensembles; defaults to --replicas.
    #[arg(long, requires = "functional")]
    pub functional_replicas: Option<usize>,
    /// Scales at which to estimate the functional; defaults to all.
    #[arg(long, value_delimiter = ',', requires = "functional")]
    pub functional_eps: Vec<f64>,
    #[command(flatten)]
    pub common: Common,
}
