//! Resolved experiment settings shared by all subcommands.

use std::path::PathBuf;

use crossbar_core::{problems, DeviceConfig, ProblemInstance, SolveOptions, SpaiParams};

use crate::args::{CommonArgs, ProblemKind, SolverKind};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub command: String,
    pub problems: Vec<ProblemKind>,
    pub k: usize,
    pub m: usize,
    pub matrix: Option<PathBuf>,
    pub device: DeviceConfig,
    pub spai: SpaiParams,
    pub solve: SolveOptions,
    pub solvers: Vec<SolverKind>,
    pub repetitions: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentSpec {
    /// Resolves flags, loading the device configuration if given.
    pub fn from_args(
        command: &str,
        args: &CommonArgs,
        default_problems: &[ProblemKind],
    ) -> CliResult<Self> {
        if args.reps == 0 {
            return Err(CliError::Usage("--reps must be at least 1".into()));
        }
        if args.max_it == 0 {
            return Err(CliError::Usage("--max-it must be at least 1".into()));
        }
        if !(args.tol >= 0.0) {
            return Err(CliError::Usage("--tol must be >= 0".into()));
        }
        if !(args.spai_tol > 0.0) || !(args.spai_budget_factor > 0.0) {
            return Err(CliError::Usage(
                "--spai-tol and --spai-budget-factor must be positive".into(),
            ));
        }
        let mut problems = if args.problem.is_empty() {
            default_problems.to_vec()
        } else {
            args.problem.clone()
        };
        if args.matrix.is_some() && args.problem.is_empty() {
            problems = vec![ProblemKind::MmFile];
        }
        if problems.contains(&ProblemKind::MmFile) && args.matrix.is_none() {
            return Err(CliError::Usage(
                "--problem mm_file requires --matrix".into(),
            ));
        }
        let mut device = match &args.device_config {
            Some(path) => DeviceConfig::load(path)
                .map_err(|e| CliError::Usage(format!("cannot load {}: {e}", path.display())))?,
            None => DeviceConfig::default(),
        };
        device.seed = args.seed;
        Ok(Self {
            command: command.to_string(),
            problems,
            k: args.k,
            m: args.m,
            matrix: args.matrix.clone(),
            device,
            spai: SpaiParams {
                tol: args.spai_tol,
                budget_factor: args.spai_budget_factor,
                ..SpaiParams::default()
            },
            solve: SolveOptions {
                tol: args.tol,
                max_it: args.max_it,
                alpha: args.alpha,
            },
            solvers: Vec::new(),
            repetitions: args.reps,
            seed: args.seed,
            output_dir: args.out.clone(),
        })
    }

    pub fn build_problem(&self, kind: ProblemKind) -> CliResult<ProblemInstance> {
        let p = match kind {
            ProblemKind::Fd3d => problems::fd_laplacian_3d(self.k)?,
            ProblemKind::FeSquare => problems::fe_laplacian_square(self.m)?,
            ProblemKind::MmFile => {
                let path = self.matrix.as_ref().expect("checked in from_args");
                problems::read_matrix_market(path)?.jacobi_scaled()?
            }
        };
        Ok(p)
    }

    /// `(key, value)` pairs describing the whole spec, for metadata blocks.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let join = |v: Vec<&str>| v.join(",");
        let mut out = vec![
            ("command".to_string(), self.command.clone()),
            (
                "problems".to_string(),
                join(self.problems.iter().map(|p| p.name()).collect()),
            ),
            ("k".to_string(), self.k.to_string()),
            ("m".to_string(), self.m.to_string()),
            (
                "matrix".to_string(),
                self.matrix
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("seed".to_string(), self.seed.to_string()),
            ("repetitions".to_string(), self.repetitions.to_string()),
            (
                "solvers".to_string(),
                join(self.solvers.iter().map(|s| s.name()).collect()),
            ),
            ("spai.tol".to_string(), format!("{:e}", self.spai.tol)),
            (
                "spai.budget_factor".to_string(),
                format!("{:e}", self.spai.budget_factor),
            ),
            (
                "spai.max_new_per_step".to_string(),
                self.spai.max_new_per_step.to_string(),
            ),
            (
                "spai.max_steps_per_column".to_string(),
                self.spai.max_steps_per_column.to_string(),
            ),
            ("solve.tol".to_string(), format!("{:e}", self.solve.tol)),
            ("solve.max_it".to_string(), self.solve.max_it.to_string()),
            ("solve.alpha".to_string(), format!("{:e}", self.solve.alpha)),
        ];
        out.extend(
            self.device
                .entries()
                .into_iter()
                .map(|(k, v)| (format!("device.{k}"), v)),
        );
        out
    }
}
