use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "contraflow", version, about = "Projected flows for equality-constrained problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a flow and write its trajectory and a run report.
    Run(RunArgs),
    /// Minimize by integrating to convergence, then certify the endpoint.
    Solve(SolveArgs),
    /// Evaluate contraction margins at a point or along a trajectory.
    Check(CheckArgs),
    /// Compare symbolic derivatives with finite differences.
    Verify(VerifyArgs),
    /// List the built-in problems.
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FlowMode {
    Raw,
    Projected,
    Sliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntegratorKind {
    Rk4,
    Rkf45,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReprojectKind {
    Off,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MarginModeArg {
    Hermitian,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Constrained,
    Unconstrained,
}

/// Problem selection and the overrides shared by every flow command.
#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Built-in problem name or path to a problem file.
    pub problem: String,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Sliding gains: one value for all constraints or one per constraint.
    #[arg(long, value_delimiter = ',')]
    pub c: Option<Vec<f64>>,
    /// `identity` or a JSON file holding the rows of a constant metric.
    #[arg(long)]
    pub metric: Option<String>,
    /// Parameter override `name=value`; repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE", allow_hyphen_values = true)]
    pub params: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct FlowArgs {
    #[arg(long, value_enum)]
    pub mode: Option<FlowMode>,
    /// Fixed RK4 step, or the initial RKF45 step.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_enum, default_value = "rk4")]
    pub integrator: IntegratorKind,
    #[arg(long, default_value_t = 1e-10)]
    pub abs_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub dt_min: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dt_max: f64,
    #[arg(long, value_enum, default_value = "off")]
    pub reproject: ReprojectKind,
    #[arg(long, default_value_t = 1e-12)]
    pub newton_tol: f64,
    #[arg(long, default_value_t = 20)]
    pub newton_max_iter: usize,
    #[arg(long, default_value_t = 1)]
    pub record_every: usize,
    /// Largest initial constraint residual accepted without sliding or re-projection.
    #[arg(long, default_value_t = 1e-6)]
    pub start_tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Trajectory CSV path.
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
    /// Report JSON path.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write a gnuplot script next to the CSV.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub flow: FlowArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Stop once the flow has settled instead of at t_end.
    #[arg(long)]
    pub until_converged: bool,
    /// Independent runs over a list, e.g. `c=0.1,1,10` or `a=1,2`.
    #[arg(long, value_name = "KEY=LIST")]
    pub sweep: Option<String>,
    #[arg(long, value_enum, default_value = "hermitian")]
    pub margin_mode: MarginModeArg,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub flow: FlowArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, default_value_t = contraflow::certify::SOLVE_TOL)]
    pub v_tol: f64,
    #[arg(long, default_value_t = contraflow::certify::SOLVE_TOL)]
    pub h_tol: f64,
    /// First-order KKT tolerance.
    #[arg(long, default_value_t = contraflow::certify::KKT_TOL)]
    pub tol: f64,
    /// Required positivity of the projected Hessian.
    #[arg(long, default_value_t = contraflow::certify::KKT_ETA)]
    pub eta: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Point to certify, comma separated.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',', conflicts_with = "along")]
    pub at: Option<Vec<f64>>,
    /// Time for `--at`; defaults to t0.
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    /// Trajectory CSV whose samples are certified.
    #[arg(long)]
    pub along: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "hermitian")]
    pub margin_mode: MarginModeArg,
    #[arg(long, value_enum, default_value = "constrained")]
    pub kind: KindArg,
    /// Write all margin reports here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Built-in problem name or path to a problem file.
    pub problem: String,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
}
