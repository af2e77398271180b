use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cone-breaker",
    version,
    about = "Symmetry breaking for Hardy-Sobolev minimizers on cones"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the exponents derived from (n, p, sigma).
    Derive(CommonArgs),
    /// Check the radial extremal against its equation and identities.
    RadialCheck(RadialCheckArgs),
    /// Compare lambda_1 of a domain against the breaking threshold.
    Verdict(VerdictArgs),
    /// Sweep the opening of an arc or cap.
    Scan(ScanArgs),
    /// Minimize the discrete quotient on a planar sector.
    Minimize(MinimizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScanOver {
    Arc,
    Cap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Outer {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Dimension (integer >= 2).
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// key=value file; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads.
    #[arg(long, env = "CONE_BREAKER_JOBS", default_value_t = 1)]
    pub jobs: usize,
    /// Include wall-clock timings (makes the report non-reproducible).
    #[arg(long)]
    pub timings: bool,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub l0: Option<f64>,
    #[arg(long)]
    pub l_max: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct DomainArgs {
    /// Planar arc of this opening (n = 2).
    #[arg(long)]
    pub arc: Option<f64>,
    /// Geodesic cap of this polar opening (n >= 3).
    #[arg(long)]
    pub cap: Option<f64>,
    /// Use this lambda_1 directly.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// |D|; alone, or alongside --lambda1.
    #[arg(long)]
    pub measure: Option<f64>,
    /// Cells of the cap eigenvalue grid.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RadialCheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Pass threshold for every residual.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct VerdictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub domain: DomainArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub over: Option<ScanOver>,
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct MinimizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Sector opening theta0.
    #[arg(long)]
    pub arc: Option<f64>,
    #[arg(long)]
    pub n_rho: Option<usize>,
    #[arg(long)]
    pub n_phi: Option<usize>,
    /// Log-radius half-width.
    #[arg(long = "L")]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub eps_reg: Option<f64>,
    /// Comma-separated coarser regularizations run first.
    #[arg(long)]
    pub eps_schedule: Option<String>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub init_perturb: Option<f64>,
    #[arg(long, value_enum)]
    pub outer: Option<Outer>,
    /// Permit sigma = 1.
    #[arg(long)]
    pub allow_sigma_one: bool,
    /// Start from this field CSV.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Write the minimizer as CSV.
    #[arg(long)]
    pub field_out: Option<PathBuf>,
}
