use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "crossbar-precond",
    version,
    about = "SPAI-preconditioned Richardson iteration on a simulated analog crossbar"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Summary table: sparsity, spectra and iteration counts per problem.
    Table2(CommonArgs),
    /// Relative residual per iteration, per solver and repetition.
    Curves(SolverSetArgs),
    /// Cumulative digital FLOPs against relative residual.
    Flops(SolverSetArgs),
    /// Rebuild SPAI at several fill budgets.
    Density(DensityArgs),
    /// Sweep converter resolution with ADC bits = DAC bits + 2.
    Bits(BitsArgs),
    /// Noise-bound certification and Monte-Carlo validation.
    Bounds(BoundsArgs),
    /// Write the problem matrix and right-hand side.
    Gen(CommonArgs),
    /// Build a preconditioner and write it as MatrixMarket.
    Precond(PrecondArgs),
    /// Run one solver.
    Solve(SolveArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum ProblemKind {
    /// 7-point finite-difference Laplacian on the unit cube.
    Fd3d,
    /// Linear finite elements on the unit square.
    #[value(name = "fe_square", alias = "fe-square")]
    FeSquare,
    /// Matrix read from `--matrix`.
    #[value(name = "mm_file", alias = "mm-file")]
    MmFile,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Fd3d => "fd3d",
            ProblemKind::FeSquare => "fe_square",
            ProblemKind::MmFile => "mm_file",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum SolverKind {
    None,
    SpaiDigital,
    SpaiHybrid,
    Ilu0,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::None => "none",
            SolverKind::SpaiDigital => "spai-digital",
            SolverKind::SpaiHybrid => "spai-hybrid",
            SolverKind::Ilu0 => "ilu0",
        }
    }

    pub fn is_stochastic(self) -> bool {
        self == SolverKind::SpaiHybrid
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Test problems (comma separated).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub problem: Vec<ProblemKind>,
    /// Points per dimension for fd3d.
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Interior points per side for fe-square.
    #[arg(long, default_value_t = 25)]
    pub m: usize,
    /// MatrixMarket file for mm-file.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Device configuration file (`key = value` lines).
    #[arg(long)]
    pub device_config: Option<PathBuf>,
    /// Master seed; overrides the seed in the device configuration.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Repetitions for stochastic (hybrid) runs.
    #[arg(long, default_value_t = 11)]
    pub reps: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// SPAI per-column residual tolerance.
    #[arg(long, default_value_t = 5.0e-2)]
    pub spai_tol: f64,
    /// SPAI fill budget as a multiple of nnz(A).
    #[arg(long, default_value_t = 40.0)]
    pub spai_budget_factor: f64,
    /// Relative residual tolerance.
    #[arg(long, default_value_t = 1.0e-5)]
    pub tol: f64,
    /// Maximum Richardson iterations.
    #[arg(long, default_value_t = 50)]
    pub max_it: usize,
    /// Richardson step length.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SolverSetArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Solvers to run (comma separated).
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_values_t = [SolverKind::None, SolverKind::SpaiDigital, SolverKind::SpaiHybrid]
    )]
    pub solvers: Vec<SolverKind>,
}

#[derive(Debug, Clone, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fill budgets γ, as multiples of nnz(A).
    #[arg(long, value_delimiter = ',', default_values_t = [20.0, 40.0, 60.0])]
    pub gammas: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct BitsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// DAC resolutions to sweep; the ADC gets two more bits.
    #[arg(long, value_delimiter = ',', default_values_t = [5u32, 7, 9, 11])]
    pub dac_bits: Vec<u32>,
    /// Iteration limit for the sweep (replaces --max-it).
    #[arg(long, default_value_t = 100)]
    pub sweep_max_it: usize,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Monte-Carlo draws of the error matrix.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecondKind {
    Spai,
    Ilu0,
}

#[derive(Debug, Clone, Args)]
pub struct PrecondArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = PrecondKind::Spai)]
    pub kind: PrecondKind,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = SolverKind::SpaiDigital)]
    pub solver: SolverKind,
    /// Repetition index whose device noise stream is used by spai-hybrid.
    #[arg(long, default_value_t = 0)]
    pub rep: u64,
}
