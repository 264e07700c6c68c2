//! Sparse approximate inverse (SPAI) and ILU(0) preconditioners, plus the
//! uniform application strategy used by the Richardson solver.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::CrossbarDevice;
use crate::error::{check_len, Error, Result};
use crate::sparse::{FlopCounter, SparseMatrix};

/// Controls for adaptive-pattern SPAI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaiParams {
    /// Per-column target for `‖A m_j − e_j‖₂`.
    pub tol: f64,
    /// Global fill budget as a multiple of `nnz(A)`.
    pub budget_factor: f64,
    pub max_new_per_step: usize,
    pub max_steps_per_column: usize,
}

impl Default for SpaiParams {
    fn default() -> Self {
        Self {
            tol: 5.0e-2,
            budget_factor: 40.0,
            max_new_per_step: 10,
            max_steps_per_column: 20,
        }
    }
}

impl SpaiParams {
    /// Global nonzero budget `budget_factor · nnz(A)`.
    pub fn budget(&self, a: &SparseMatrix) -> usize {
        (self.budget_factor * a.nnz() as f64).floor() as usize
    }

    /// Per-column cap: the global budget spread evenly, at least one entry.
    pub fn column_cap(&self, a: &SparseMatrix) -> usize {
        (self.budget(a) / a.n_cols().max(1)).max(1)
    }

    fn validate(&self, a: &SparseMatrix) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParameter(
                "SPAI tolerance must be positive".into(),
            ));
        }
        if self.budget(a) < a.n_cols() {
            return Err(Error::InvalidParameter(format!(
                "SPAI budget {} is below n = {}",
                self.budget(a),
                a.n_cols()
            )));
        }
        if self.max_new_per_step == 0 || self.max_steps_per_column == 0 {
            return Err(Error::InvalidParameter(
                "SPAI step limits must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Why pattern growth stopped for a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnStop {
    /// Residual reached the tolerance.
    Converged,
    /// Column hit the per-column fill cap.
    FillCap,
    /// Ran out of growth steps.
    StepLimit,
    /// No candidate index could reduce the residual.
    NoCandidates,
}

impl ColumnStop {
    pub fn is_capped(self) -> bool {
        self != ColumnStop::Converged
    }
}

/// Result of [`spai_build`].
#[derive(Debug, Clone)]
pub struct SpaiBuild {
    pub m: SparseMatrix,
    /// Final `‖A m_j − e_j‖₂` per column.
    pub residuals: Vec<f64>,
    pub stops: Vec<ColumnStop>,
    /// Residual after every growth step, per column (nonincreasing).
    pub histories: Vec<Vec<f64>>,
    /// Set when no column met the tolerance.
    pub warning: bool,
    /// Modeled cost of the least-squares solves (`2mk² − 2k³/3` per QR).
    pub ls_flops: u64,
}

impl SpaiBuild {
    pub fn capped_columns(&self) -> usize {
        self.stops.iter().filter(|s| s.is_capped()).count()
    }
}

struct ColumnResult {
    pattern: Vec<usize>,
    values: Vec<f64>,
    history: Vec<f64>,
    stop: ColumnStop,
    ls_flops: u64,
}

/// Builds `M ≈ A⁻¹` column by column, growing each sparsity pattern from `{j}`.
///
/// Each step solves the least-squares problem `min ‖A(:,J) m − e_j‖₂` by QR
/// and adds up to `max_new_per_step` indices `k` with the largest one-step
/// reduction `(rᵀ A e_k)² / ‖A e_k‖²`, drawn from columns of `A` that touch
/// the residual. Columns are computed in parallel and merged by index, so
/// the result does not depend on the thread count.
pub fn spai_build(a: &SparseMatrix, params: &SpaiParams) -> Result<SpaiBuild> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.n_rows(),
            cols: a.n_cols(),
        });
    }
    params.validate(a)?;
    let n = a.n_cols();
    let at = a.transpose();
    let col_norms_sq: Vec<f64> = (0..n)
        .map(|k| at.row(k).1.iter().map(|v| v * v).sum())
        .collect();
    if let Some(k) = col_norms_sq.iter().position(|&s| s == 0.0) {
        return Err(Error::InvalidStructure(format!("column {k} of A is empty")));
    }
    let cap = params.column_cap(a);

    let columns: Vec<ColumnResult> = (0..n)
        .into_par_iter()
        .map(|j| spai_column(a, &at, &col_norms_sq, j, params, cap))
        .collect();

    let mut triplets = Vec::new();
    let mut residuals = Vec::with_capacity(n);
    let mut stops = Vec::with_capacity(n);
    let mut histories = Vec::with_capacity(n);
    let mut ls_flops = 0;
    for (j, col) in columns.into_iter().enumerate() {
        ls_flops += col.ls_flops;
        for (&i, &v) in col.pattern.iter().zip(&col.values) {
            triplets.push((i, j, v));
        }
        residuals.push(*col.history.last().unwrap_or(&1.0));
        stops.push(col.stop);
        histories.push(col.history);
    }
    let warning = n > 0 && stops.iter().all(|s| s.is_capped());
    Ok(SpaiBuild {
        m: SparseMatrix::from_triplets(n, n, &triplets)?,
        residuals,
        stops,
        histories,
        warning,
        ls_flops,
    })
}

fn spai_column(
    a: &SparseMatrix,
    at: &SparseMatrix,
    col_norms_sq: &[f64],
    j: usize,
    params: &SpaiParams,
    cap: usize,
) -> ColumnResult {
    let n = a.n_cols();
    let mut pattern = vec![j];
    let mut in_pattern = vec![false; n];
    in_pattern[j] = true;
    let mut r = vec![0.0; n];
    let mut marked = vec![false; n];
    let mut history = Vec::new();
    let mut best: (Vec<usize>, Vec<f64>) = (vec![j], vec![0.0]);
    let mut steps = 0;
    let mut ls_flops = 0u64;

    loop {
        let (values, rows, res) = solve_column(at, j, &mut pattern, &mut in_pattern, &mut r);
        let (mm, kk) = (rows.len() as f64, pattern.len() as f64);
        ls_flops += (2.0 * mm * kk * kk - 2.0 * kk * kk * kk / 3.0).max(0.0) as u64;
        // the least-squares residual cannot grow on a superset; guard rounding anyway
        let prev = history.last().copied().unwrap_or(f64::INFINITY);
        let res_kept = res.min(prev);
        if res <= prev {
            best = (pattern.clone(), values);
        }
        history.push(res_kept);
        let stop = if res_kept <= params.tol {
            Some(ColumnStop::Converged)
        } else if pattern.len() >= cap {
            Some(ColumnStop::FillCap)
        } else if steps >= params.max_steps_per_column {
            Some(ColumnStop::StepLimit)
        } else {
            None
        };
        if let Some(stop) = stop {
            return finish(best, history, stop, ls_flops);
        }
        steps += 1;

        // score candidates touching the residual support
        let mut scored: Vec<(f64, usize)> = Vec::new();
        let mut seen: Vec<usize> = Vec::new();
        for &i in &rows {
            if r[i] == 0.0 {
                continue;
            }
            for &k in a.row(i).0 {
                if in_pattern[k] || marked[k] {
                    continue;
                }
                marked[k] = true;
                seen.push(k);
                let (ks, kv) = at.row(k);
                let proj: f64 = ks.iter().zip(kv).map(|(&ii, &v)| r[ii] * v).sum();
                let gain = proj * proj / col_norms_sq[k];
                if gain > 0.0 {
                    scored.push((gain, k));
                }
            }
        }
        for &i in &rows {
            r[i] = 0.0;
        }
        for &k in &seen {
            marked[k] = false;
        }
        if scored.is_empty() {
            return finish(best, history, ColumnStop::NoCandidates, ls_flops);
        }
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        let room = cap - pattern.len();
        for &(_, k) in scored.iter().take(params.max_new_per_step.min(room)) {
            pattern.push(k);
            in_pattern[k] = true;
        }
    }
}

fn finish(
    best: (Vec<usize>, Vec<f64>),
    history: Vec<f64>,
    stop: ColumnStop,
    ls_flops: u64,
) -> ColumnResult {
    let (pattern, values) = best;
    ColumnResult {
        pattern,
        values,
        history,
        stop,
        ls_flops,
    }
}

/// Solves the least-squares subproblem for the current pattern. Leaves the
/// residual scattered into `r` over the returned row set. Pattern indices
/// whose columns make the subproblem rank deficient are removed.
fn solve_column(
    at: &SparseMatrix,
    j: usize,
    pattern: &mut Vec<usize>,
    in_pattern: &mut [bool],
    r: &mut [f64],
) -> (Vec<f64>, Vec<usize>, f64) {
    loop {
        let mut rows: Vec<usize> = pattern
            .iter()
            .flat_map(|&k| at.row(k).0.iter().copied())
            .collect();
        rows.push(j);
        rows.sort_unstable();
        rows.dedup();
        let local = |i: usize| rows.binary_search(&i).expect("row in set");

        let mut sub = DMatrix::zeros(rows.len(), pattern.len());
        for (c, &k) in pattern.iter().enumerate() {
            let (ks, kv) = at.row(k);
            for (&i, &v) in ks.iter().zip(kv) {
                sub[(local(i), c)] = v;
            }
        }
        let mut rhs = DVector::zeros(rows.len());
        rhs[local(j)] = 1.0;

        let qr = sub.clone().qr();
        let upper = qr.r();
        let diag_max = (0..pattern.len()).fold(0.0f64, |m, c| m.max(upper[(c, c)].abs()));
        let bad = (0..pattern.len())
            .find(|&c| upper[(c, c)].abs() <= 1e-12 * diag_max.max(f64::MIN_POSITIVE));
        if let Some(c) = bad {
            if pattern.len() > 1 {
                in_pattern[pattern[c]] = false;
                pattern.remove(c);
                continue;
            }
        }
        let mut qtb = rhs.clone();
        qr.q_tr_mul(&mut qtb);
        let k = pattern.len();
        let coeffs = upper
            .solve_upper_triangular(&qtb.rows(0, k).into_owned())
            .unwrap_or_else(|| DVector::zeros(k));
        let resid = &sub * &coeffs - &rhs;
        for (li, &i) in rows.iter().enumerate() {
            r[i] = resid[li];
        }
        let res = resid.norm();
        return (coeffs.as_slice().to_vec(), rows, res);
    }
}

/// ILU(0) factors: `L` unit lower triangular (diagonal stored), `U` upper.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    pub l: SparseMatrix,
    pub u: SparseMatrix,
}

impl Ilu0 {
    /// Solves `L U x = b` by forward and backward substitution.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.l.n_rows();
        check_len(n, b.len())?;
        let mut y = b.to_vec();
        for i in 0..n {
            let (cols, vals) = self.l.row(i);
            let mut s = y[i];
            for (&k, &v) in cols.iter().zip(vals) {
                if k < i {
                    s -= v * y[k];
                }
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let (cols, vals) = self.u.row(i);
            let mut s = y[i];
            let mut diag = 0.0;
            for (&k, &v) in cols.iter().zip(vals) {
                if k > i {
                    s -= v * y[k];
                } else if k == i {
                    diag = v;
                }
            }
            y[i] = s / diag;
        }
        Ok(y)
    }

    pub fn nnz(&self) -> usize {
        self.l.nnz() + self.u.nnz()
    }
}

/// Incomplete LU factorization restricted to the pattern of `A`, no pivoting.
pub fn ilu0_build(a: &SparseMatrix) -> Result<Ilu0> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.n_rows(),
            cols: a.n_cols(),
        });
    }
    let n = a.n_rows();
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let mut vals = a.values().to_vec();
    let mut diag_pos = vec![usize::MAX; n];
    for i in 0..n {
        for p in offsets[i]..offsets[i + 1] {
            if cols[p] == i {
                diag_pos[i] = p;
            }
        }
        if diag_pos[i] == usize::MAX {
            return Err(Error::ZeroPivot { row: i });
        }
    }
    // IKJ variant: column position lookup per row via a dense marker
    let mut pos = vec![usize::MAX; n];
    for i in 0..n {
        let row = offsets[i]..offsets[i + 1];
        for p in row.clone() {
            pos[cols[p]] = p;
        }
        for p in row.clone() {
            let k = cols[p];
            if k >= i {
                break;
            }
            let pivot = vals[diag_pos[k]];
            if pivot == 0.0 {
                return Err(Error::ZeroPivot { row: k });
            }
            let factor = vals[p] / pivot;
            vals[p] = factor;
            for q in diag_pos[k] + 1..offsets[k + 1] {
                let c = cols[q];
                if pos[c] != usize::MAX {
                    vals[pos[c]] -= factor * vals[q];
                }
            }
        }
        for p in row {
            pos[cols[p]] = usize::MAX;
        }
        if vals[diag_pos[i]] == 0.0 {
            return Err(Error::ZeroPivot { row: i });
        }
    }
    let mut lt = Vec::new();
    let mut ut = Vec::new();
    for i in 0..n {
        lt.push((i, i, 1.0));
        for p in offsets[i]..offsets[i + 1] {
            let c = cols[p];
            if c < i {
                lt.push((i, c, vals[p]));
            } else {
                ut.push((i, c, vals[p]));
            }
        }
    }
    Ok(Ilu0 {
        l: SparseMatrix::from_triplets(n, n, &lt)?,
        u: SparseMatrix::from_triplets(n, n, &ut)?,
    })
}

/// How the preconditioner is applied to a residual.
#[derive(Debug, Clone)]
pub enum Preconditioner {
    Identity,
    SpaiDigital(SparseMatrix),
    /// `M` is applied by a programmed crossbar; the matrix is kept for reference.
    SpaiHybrid {
        m: SparseMatrix,
        device: CrossbarDevice,
    },
    Ilu0(Ilu0),
}

impl Preconditioner {
    /// Programs `m` onto a device and wraps it for hybrid application.
    pub fn hybrid(m: SparseMatrix, device: CrossbarDevice) -> Result<Self> {
        if device.n_rows() != m.n_rows() || device.n_cols() != m.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: m.n_rows(),
                found: device.n_rows(),
            });
        }
        Ok(Preconditioner::SpaiHybrid { m, device })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preconditioner::Identity => "none",
            Preconditioner::SpaiDigital(_) => "spai-digital",
            Preconditioner::SpaiHybrid { .. } => "spai-hybrid",
            Preconditioner::Ilu0(_) => "ilu0",
        }
    }

    pub fn is_hybrid(&self) -> bool {
        matches!(self, Preconditioner::SpaiHybrid { .. })
    }

    /// Stored nonzeros whose application is charged as digital work.
    pub fn digital_nnz(&self) -> usize {
        match self {
            Preconditioner::Identity | Preconditioner::SpaiHybrid { .. } => 0,
            Preconditioner::SpaiDigital(m) => m.nnz(),
            Preconditioner::Ilu0(f) => f.nnz(),
        }
    }

    /// Nonzeros of the preconditioner itself, whatever executes it.
    pub fn nnz(&self) -> usize {
        match self {
            Preconditioner::Identity => 0,
            Preconditioner::SpaiDigital(m) | Preconditioner::SpaiHybrid { m, .. } => m.nnz(),
            Preconditioner::Ilu0(f) => f.nnz(),
        }
    }

    /// Returns `M r`, charging the work to `counter`.
    pub fn apply(&mut self, r: &[f64], counter: &mut FlopCounter) -> Result<Vec<f64>> {
        match self {
            Preconditioner::Identity => Ok(r.to_vec()),
            Preconditioner::SpaiDigital(m) => counter.spmv(m, r),
            Preconditioner::SpaiHybrid { device, .. } => {
                let y = device.analog_mvm(r)?;
                counter.charge_analog_mvm();
                Ok(y)
            }
            Preconditioner::Ilu0(f) => {
                let y = f.solve(r)?;
                counter.charge_digital(2 * f.nnz() as u64);
                Ok(y)
            }
        }
    }
}
