//! Preconditioned Richardson iteration `x_{i+1} = x_i + α M (b − A x_i)`
//! with exact digital-FLOP accounting.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::precond::Preconditioner;
use crate::sparse::{FlopCounter, SparseMatrix};

/// Relative residual above which a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1.0e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Stop when `‖r_i‖₂ ≤ tol · ‖b‖₂`. Zero runs the full `max_it` iterations.
    pub tol: f64,
    pub max_it: usize,
    pub alpha: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1.0e-5,
            max_it: 50,
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

/// Where the preconditioner runs, for the closed-form FLOP model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Digital,
    Hybrid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterations: usize,
    /// `‖r_i‖₂ / ‖b‖₂` for `i = 0..=iterations`.
    pub residual_history: Vec<f64>,
    /// Work done inside the iteration loop.
    pub counter: FlopCounter,
    /// Work for the initial residual and `‖b‖₂`, outside the per-iteration model.
    pub setup: FlopCounter,
    pub mode: ExecMode,
    pub x: Vec<f64>,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        *self
            .residual_history
            .last()
            .expect("history is never empty")
    }

    /// Digital FLOPs spent up to and including iteration `i`.
    pub fn cumulative_flops(&self, i: usize) -> u64 {
        if self.iterations == 0 {
            return 0;
        }
        self.counter.digital_flops / self.iterations as u64 * i as u64
    }

    /// Two-column CSV `iteration,relative_residual`.
    pub fn residual_csv(&self) -> String {
        let mut s = String::from("iteration,relative_residual\n");
        for (i, r) in self.residual_history.iter().enumerate() {
            let _ = writeln!(s, "{i},{r:e}");
        }
        s
    }
}

/// Runs preconditioned Richardson from `x0` (zero when `None`).
///
/// Every iteration performs, in order: preconditioner application, the
/// update AXPY, the residual SpMV and AXPY, and the residual norm. The loop
/// therefore charges exactly `3n + 2 nnz(A)` plus the preconditioner's own
/// digital cost per iteration.
pub fn solve(
    a: &SparseMatrix,
    b: &[f64],
    precond: &mut Preconditioner,
    opts: &SolveOptions,
    x0: Option<&[f64]>,
) -> Result<SolveReport> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.n_rows(),
            cols: a.n_cols(),
        });
    }
    let n = a.n_rows();
    check_len(n, b.len())?;
    if !(opts.tol >= 0.0) || opts.max_it == 0 {
        return Err(Error::InvalidParameter(
            "tol must be >= 0 and max_it >= 1".into(),
        ));
    }
    let mut x = match x0 {
        Some(v) => {
            check_len(n, v.len())?;
            v.to_vec()
        }
        None => vec![0.0; n],
    };

    let mut setup = FlopCounter::new();
    let b_norm = setup.norm2(b);
    if b_norm == 0.0 {
        return Err(Error::InvalidParameter("right-hand side is zero".into()));
    }
    let ax = setup.spmv(a, &x)?;
    let mut r = setup.axpy(-1.0, &ax, b)?;
    let mut rel = setup.norm2(&r) / b_norm;

    let mode = if precond.is_hybrid() {
        ExecMode::Hybrid
    } else {
        ExecMode::Digital
    };
    let mut counter = FlopCounter::new();
    let mut history = vec![rel];
    let mut iterations = 0;
    while rel > opts.tol && iterations < opts.max_it {
        let d = precond.apply(&r, &mut counter)?;
        x = counter.axpy(opts.alpha, &d, &x)?;
        let ax = counter.spmv(a, &x)?;
        r = counter.axpy(-1.0, &ax, b)?;
        rel = counter.norm2(&r) / b_norm;
        iterations += 1;
        history.push(rel);
        if !rel.is_finite() || rel > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                iteration: iterations,
                residual: rel,
            });
        }
    }
    let status = if rel <= opts.tol {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIterations
    };
    Ok(SolveReport {
        status,
        iterations,
        residual_history: history,
        counter,
        setup,
        mode,
        x,
    })
}

/// Per-iteration hybrid speedup `1 + 2 nnz(M) / (3n + 2 nnz(A))`.
pub fn speedup_ideal(n: usize, nnz_a: usize, nnz_m: usize) -> f64 {
    1.0 + 2.0 * nnz_m as f64 / (3.0 * n as f64 + 2.0 * nnz_a as f64)
}

/// Whole-solve speedup `(m_d / m_h) · S_ideal`.
pub fn speedup_total(m_d: usize, m_h: usize, n: usize, nnz_a: usize, nnz_m: usize) -> f64 {
    m_d as f64 / m_h as f64 * speedup_ideal(n, nnz_a, nnz_m)
}

/// Closed-form digital FLOPs of `m` iterations.
pub fn flops_digital_run(m: usize, n: usize, nnz_a: usize, nnz_m: usize, mode: ExecMode) -> u64 {
    let per_iter = 3 * n
        + 2 * nnz_a
        + match mode {
            ExecMode::Digital => 2 * nnz_m,
            ExecMode::Hybrid => 0,
        };
    (m * per_iter) as u64
}
