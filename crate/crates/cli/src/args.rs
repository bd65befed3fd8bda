use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "lvjump", version, about = "Stochastic Lotka-Volterra systems with jumps")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON model file.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Time horizon.
    #[arg(long = "T", global = true, default_value_t = 5.0)]
    pub horizon: f64,
    /// Base step; T/h must be an integer.
    #[arg(long = "h", global = true, default_value_t = 1.0 / 256.0)]
    pub step: f64,
    /// Monte Carlo path count.
    #[arg(long, global = true, default_value_t = 200)]
    pub paths: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the model against the positivity assumptions.
    Validate,
    /// Integrate one path and write trajectory CSVs.
    Simulate(SimulateArgs),
    /// Monte Carlo diagnostics against the analytic bounds.
    Analyze(AnalyzeArgs),
    /// Compute the regime report.
    Classify(ClassifyArgs),
    /// Classify the model over a grid of one parameter.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Initial state, comma separated (default all ones).
    #[arg(long, value_delimiter = ',')]
    pub x0: Vec<f64>,
    /// Also write the auxiliary bounds Y and Z and a sandwich summary.
    #[arg(long)]
    pub with_bounds: bool,
    /// Compare with the explicit solution (single species only).
    #[arg(long)]
    pub with_oracle: bool,
    #[arg(long, default_value_t = 1e-2)]
    pub oracle_tol: f64,
    /// Write the sampled driving path in binary form.
    #[arg(long)]
    pub dump_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalyzeKind {
    Moments,
    Lyapunov,
    InverseMoment,
    Couple,
    Invariant,
}

impl AnalyzeKind {
    pub fn name(self) -> &'static str {
        match self {
            AnalyzeKind::Moments => "moments",
            AnalyzeKind::Lyapunov => "lyapunov",
            AnalyzeKind::InverseMoment => "inverse-moment",
            AnalyzeKind::Couple => "couple",
            AnalyzeKind::Invariant => "invariant",
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    pub which: AnalyzeKind,
    /// 1-based species index for single-species diagnostics.
    #[arg(long, default_value_t = 1)]
    pub species: usize,
    #[arg(long, value_delimiter = ',')]
    pub x0: Vec<f64>,
    /// Moment order.
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 50)]
    pub checkpoints: usize,
    /// First initial value for couple/invariant.
    #[arg(long, default_value_t = 0.5)]
    pub x: f64,
    /// Second initial value for couple/invariant.
    #[arg(long, default_value_t = 2.0)]
    pub y: f64,
    /// Seed of the second path set for invariant (default seed + 1).
    #[arg(long)]
    pub seed_y: Option<u64>,
    /// Allowed |mean - expected| for the lyapunov exponent verdict.
    #[arg(long, default_value_t = 0.05)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Moment orders for the jump moment bounds.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub p: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Parameter path: a.I, sigma.I, B.I.J, gamma.I.K or lambda.K (1-based).
    #[arg(long)]
    pub param: String,
    /// Explicit grid values, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub values: Vec<f64>,
    /// Grid as start:stop:step (inclusive).
    #[arg(long, conflicts_with = "values", allow_hyphen_values = true)]
    pub range: Option<String>,
}
