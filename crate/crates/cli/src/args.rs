use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "foodweb",
    version,
    about = "Bounds, certificates and simulation for chemostat foodwebs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a model config, report survivability.
    Validate(CommonArgs),
    /// Stability and persistence certificates with the bounds box.
    Certify(CommonArgs),
    /// Multi-start search for special equilibria inside the bounds box.
    Fixpoints(FixpointArgs),
    /// Integrate the ODE from given or seeded random initial data.
    Simulate(SimulateArgs),
    /// A priori and bilateral bounds on the limits of every trajectory.
    Bounds(CommonArgs),
    /// Recompute rho and the iteration gap along a parameter grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Model config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stopping tolerance of the period-two iteration and the fixed-point search.
    #[arg(long, default_value_t = foodweb::fixpoint::ITERATION_TOL)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FixpointArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 64)]
    pub starts: usize,
    /// Restrict to a species subset, 1-based, e.g. `1,3`. Empty string for none.
    #[arg(long, value_delimiter = ',')]
    pub subset: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Horizon; defaults to 1e3 for certified models and 1e4 otherwise.
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub v0: Option<Vec<f64>>,
    /// Number of seeded random initial conditions (ignored with --x0/--v0).
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    #[arg(long)]
    pub allow_absent_species: bool,
    #[arg(long, default_value_t = 2001)]
    pub samples: usize,
    #[arg(long, default_value_t = foodweb::sim::DEFAULT_WINDOW_FRACTION)]
    pub window: f64,
    /// Spread below which a trailing-window coordinate counts as converged.
    #[arg(long, default_value_t = 1e-6)]
    pub converge_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub atol: f64,
    /// Write plot.svg next to each trajectory.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// `gamma` (uniform multiplier), `D_i` or `S_i`.
    #[arg(long)]
    pub sweep_param: String,
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_hyphen_values = true
    )]
    pub sweep_grid: Vec<f64>,
    /// Also simulate each grid point and fill the `converged` column.
    #[arg(long)]
    pub simulate: bool,
    #[arg(long)]
    pub t_end: Option<f64>,
}
