//! Solver runs shared by the experiment commands.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crossbar_core::sparse::spmv;
use crossbar_core::spectral::{spectral_radius_estimate, PowerOptions};
use crossbar_core::{
    ilu0_build, solve, spai_build, CrossbarDevice, DeviceConfig, Error, Ilu0, Preconditioner,
    ProblemInstance, SolveOptions, SolveStatus, SpaiBuild, SpaiParams, SparseMatrix,
};

use crate::args::SolverKind;

/// How one run ended.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Outcome {
    Converged(usize),
    MaxIterations(usize),
    Diverged(usize),
    Failed(String),
}

impl Outcome {
    pub fn converged(&self) -> Option<usize> {
        match self {
            Outcome::Converged(m) => Some(*m),
            _ => None,
        }
    }

    /// Iterations actually performed.
    pub fn iterations_run(&self) -> usize {
        match self {
            Outcome::Converged(m) | Outcome::MaxIterations(m) | Outcome::Diverged(m) => *m,
            Outcome::Failed(_) => 0,
        }
    }

    /// Converged runs first by iteration count, failures after.
    fn rank(&self) -> (u8, usize) {
        match self {
            Outcome::Converged(m) => (0, *m),
            Outcome::MaxIterations(m) => (1, *m),
            Outcome::Diverged(m) => (2, usize::MAX - *m),
            Outcome::Failed(_) => (3, 0),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Converged(m) => write!(f, "{m}"),
            Outcome::MaxIterations(m) => write!(f, "MaxIterations({m})"),
            Outcome::Diverged(m) => write!(f, "Diverged({m})"),
            Outcome::Failed(msg) => write!(f, "Failed({})", msg.replace(',', ";")),
        }
    }
}

/// Lower median with failures ranked last.
pub fn median_outcome(outcomes: &[Outcome]) -> Outcome {
    let mut sorted = outcomes.to_vec();
    sorted.sort_by_key(Outcome::rank);
    sorted[(sorted.len() - 1) / 2].clone()
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub outcome: Outcome,
    pub residual_history: Vec<f64>,
    pub digital_flops: u64,
}

impl RunResult {
    fn failed(msg: String) -> Self {
        Self {
            outcome: Outcome::Failed(msg),
            residual_history: Vec::new(),
            digital_flops: 0,
        }
    }

    /// Cumulative digital FLOPs after each iteration (index 0 is the start).
    pub fn cumulative_flops(&self) -> Vec<u64> {
        let m = self.outcome.iterations_run() as u64;
        let per = self.digital_flops.checked_div(m).unwrap_or(0);
        (0..self.residual_history.len() as u64)
            .map(|i| i * per)
            .collect()
    }
}

/// Preconditioners built once per problem.
pub struct Prepared {
    pub problem: ProblemInstance,
    pub spai: Option<Result<SpaiBuild, String>>,
    pub ilu: Option<Result<Ilu0, String>>,
}

impl Prepared {
    pub fn new(problem: ProblemInstance, solvers: &[SolverKind], params: &SpaiParams) -> Self {
        let needs_spai = solvers
            .iter()
            .any(|s| matches!(s, SolverKind::SpaiDigital | SolverKind::SpaiHybrid));
        let spai = needs_spai.then(|| spai_build(&problem.a, params).map_err(|e| e.to_string()));
        let ilu = solvers
            .contains(&SolverKind::Ilu0)
            .then(|| ilu0_build(&problem.a).map_err(|e| e.to_string()));
        Self { problem, spai, ilu }
    }

    pub fn spai_matrix(&self) -> Option<&SparseMatrix> {
        match &self.spai {
            Some(Ok(b)) => Some(&b.m),
            _ => None,
        }
    }

    fn preconditioner(
        &self,
        solver: SolverKind,
        device: &DeviceConfig,
        rep: u64,
    ) -> Result<Preconditioner, String> {
        let spai = || match &self.spai {
            Some(Ok(b)) => Ok(b.m.clone()),
            Some(Err(e)) => Err(e.clone()),
            None => Err("SPAI was not built".to_string()),
        };
        match solver {
            SolverKind::None => Ok(Preconditioner::Identity),
            SolverKind::SpaiDigital => spai().map(Preconditioner::SpaiDigital),
            SolverKind::SpaiHybrid => {
                let m = spai()?;
                let dev = CrossbarDevice::program_on_stream(&m, device, rep)
                    .map_err(|e| e.to_string())?;
                Preconditioner::hybrid(m, dev).map_err(|e| e.to_string())
            }
            SolverKind::Ilu0 => match &self.ilu {
                Some(Ok(f)) => Ok(Preconditioner::Ilu0(f.clone())),
                Some(Err(e)) => Err(e.clone()),
                None => Err("ILU(0) was not built".to_string()),
            },
        }
    }

    /// One run; repetition `rep` selects the device noise stream.
    pub fn run(
        &self,
        solver: SolverKind,
        device: &DeviceConfig,
        opts: &SolveOptions,
        rep: u64,
    ) -> RunResult {
        let mut pre = match self.preconditioner(solver, device, rep) {
            Ok(p) => p,
            Err(e) => return RunResult::failed(e),
        };
        let p = &self.problem;
        match solve(&p.a, &p.b, &mut pre, opts, None) {
            Ok(rep) => RunResult {
                outcome: match rep.status {
                    SolveStatus::Converged => Outcome::Converged(rep.iterations),
                    SolveStatus::MaxIterations => Outcome::MaxIterations(rep.iterations),
                },
                residual_history: rep.residual_history,
                digital_flops: rep.counter.digital_flops,
            },
            Err(Error::Diverged { iteration, .. }) => RunResult {
                outcome: Outcome::Diverged(iteration),
                residual_history: Vec::new(),
                digital_flops: 0,
            },
            Err(e) => RunResult::failed(e.to_string()),
        }
    }

    /// `reps` runs; deterministic solvers run once and are repeated.
    pub fn run_reps(
        &self,
        solver: SolverKind,
        device: &DeviceConfig,
        opts: &SolveOptions,
        reps: usize,
    ) -> Vec<RunResult> {
        if solver.is_stochastic() {
            (0..reps as u64)
                .into_par_iter()
                .map(|r| self.run(solver, device, opts, r))
                .collect()
        } else {
            vec![self.run(solver, device, opts, 0); reps]
        }
    }
}

/// Per-iteration median of several residual histories, over the runs still
/// active at that iteration.
pub fn median_curve(runs: &[RunResult]) -> Vec<f64> {
    let len = runs
        .iter()
        .map(|r| r.residual_history.len())
        .max()
        .unwrap_or(0);
    (0..len)
        .map(|i| {
            let mut vals: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.residual_history.get(i).copied())
                .collect();
            vals.sort_by(f64::total_cmp);
            let k = vals.len();
            if k % 2 == 1 {
                vals[k / 2]
            } else {
                0.5 * (vals[k / 2 - 1] + vals[k / 2])
            }
        })
        .collect()
}

pub fn rho_i_minus_ma(a: &SparseMatrix, m: &SparseMatrix, opts: &PowerOptions) -> f64 {
    spectral_radius_estimate(
        |x| {
            let max = spmv(m, &spmv(a, x).expect("square")).expect("square");
            x.iter().zip(&max).map(|(u, v)| u - v).collect()
        },
        a.n_rows(),
        opts,
    )
    .value
}

/// Power iteration on `x ↦ x − mean_r ŷ_r(A x)`, the analog preconditioner
/// averaged over `reps` independently programmed devices.
pub fn rho_hybrid_proxy(
    a: &SparseMatrix,
    m: &SparseMatrix,
    device: &DeviceConfig,
    reps: usize,
    opts: &PowerOptions,
) -> Result<f64, String> {
    let mut devices = (0..reps as u64)
        .map(|r| CrossbarDevice::program_on_stream(m, device, r))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let n = a.n_rows();
    let est = spectral_radius_estimate(
        |x| {
            let ax = spmv(a, x).expect("square");
            let mut avg = vec![0.0; n];
            for dev in devices.iter_mut() {
                let y = dev.analog_mvm(&ax).expect("dimensions match");
                avg.iter_mut().zip(&y).for_each(|(s, v)| *s += v);
            }
            x.iter()
                .zip(&avg)
                .map(|(u, v)| u - v / reps as f64)
                .collect()
        },
        n,
        opts,
    );
    Ok(est.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_ranks_failures_last() {
        let o = [
            Outcome::MaxIterations(50),
            Outcome::Converged(9),
            Outcome::Converged(7),
        ];
        assert_eq!(median_outcome(&o), Outcome::Converged(9));
        let o = [
            Outcome::Failed("x".into()),
            Outcome::Diverged(3),
            Outcome::Converged(7),
        ];
        assert_eq!(median_outcome(&o), Outcome::Diverged(3));
    }

    #[test]
    fn outcome_display_is_csv_safe() {
        assert_eq!(Outcome::Converged(7).to_string(), "7");
        assert_eq!(Outcome::MaxIterations(50).to_string(), "MaxIterations(50)");
        assert_eq!(Outcome::Failed("a,b".into()).to_string(), "Failed(a;b)");
    }

    #[test]
    fn median_curve_uses_active_runs() {
        let run = |h: Vec<f64>| RunResult {
            outcome: Outcome::Converged(h.len() - 1),
            residual_history: h,
            digital_flops: 0,
        };
        let runs = [
            run(vec![1.0, 0.5]),
            run(vec![1.0, 0.1, 0.01]),
            run(vec![1.0, 0.3]),
        ];
        assert_eq!(median_curve(&runs), vec![1.0, 0.3, 0.01]);
    }
}
