//! Power-iteration estimators for spectral norms, spectral radii and condition numbers.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::sparse::{norm2, LinearOperator, SparseMatrix};

/// Largest `n` for which dense factorizations are attempted.
pub const DENSE_LIMIT: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    /// Relative change of the estimate below which iteration stops.
    pub tol: f64,
    pub max_iters: usize,
    /// Seed of the random start vector.
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 5000,
            seed: 0x5eed,
        }
    }
}

/// Result of a power iteration. `converged == false` flags an estimate taken
/// at the iteration cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn random_unit(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, 0);
    let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    x
}

/// Estimates `‖A‖₂` by power iteration on `AᵀA`.
///
/// The Rayleigh quotient never exceeds the true largest eigenvalue, so the
/// estimate is biased low.
pub fn spectral_norm_estimate<Op: LinearOperator + ?Sized>(
    a: &Op,
    opts: &PowerOptions,
) -> Result<SpectralEstimate> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let n = a.ncols();
    if n == 0 {
        return Ok(SpectralEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let mut x = random_unit(n, opts.seed);
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut prev = 0.0;
    for it in 1..=opts.max_iters {
        a.apply(&x, &mut y);
        let est = norm2(&y);
        if est == 0.0 {
            return Ok(SpectralEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            });
        }
        a.apply_transpose(&y, &mut z);
        let nz = norm2(&z);
        if nz == 0.0 {
            // AᵀA x vanished to rounding: the estimate is already at noise level
            return Ok(SpectralEstimate {
                value: est,
                iterations: it,
                converged: true,
            });
        }
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi = zi / nz;
        }
        if it > 1 && (est - prev).abs() <= opts.tol * est {
            return Ok(SpectralEstimate {
                value: est,
                iterations: it,
                converged: true,
            });
        }
        prev = est;
    }
    Ok(SpectralEstimate {
        value: prev,
        iterations: opts.max_iters,
        converged: false,
    })
}

/// Estimates the spectral radius of an operator given only its action.
///
/// The operator may be stochastic (e.g. an analog MVM); in that case the
/// estimate rarely meets `tol` and is returned flagged as unconverged, taken
/// as the geometric mean of the last growth ratios.
pub fn spectral_radius_estimate<F>(mut apply: F, n: usize, opts: &PowerOptions) -> SpectralEstimate
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    const WINDOW: usize = 20;
    if n == 0 {
        return SpectralEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut x = random_unit(n, opts.seed);
    let mut log_ratios: Vec<f64> = Vec::new();
    let mut prev = f64::NAN;
    for it in 1..=opts.max_iters {
        let y = apply(&x);
        let est = norm2(&y);
        if est == 0.0 || !est.is_finite() {
            return SpectralEstimate {
                value: est,
                iterations: it,
                converged: est == 0.0,
            };
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / est;
        }
        log_ratios.push(est.ln());
        if it > 1 && (est - prev).abs() <= opts.tol * est {
            return SpectralEstimate {
                value: est,
                iterations: it,
                converged: true,
            };
        }
        prev = est;
    }
    let tail = &log_ratios[log_ratios.len().saturating_sub(WINDOW)..];
    let value = (tail.iter().sum::<f64>() / tail.len() as f64).exp();
    SpectralEstimate {
        value,
        iterations: opts.max_iters,
        converged: false,
    }
}

/// Estimates `κ₂(A) = σ_max / σ_min`.
///
/// `σ_max` comes from power iteration on `AᵀA`; `σ_min` from inverse power
/// iteration on `AᵀA` using one LU factorization of `A` and one of `Aᵀ`.
pub fn condition_number_estimate(a: &SparseMatrix, opts: &PowerOptions) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.n_rows(),
            cols: a.n_cols(),
        });
    }
    let n = a.n_rows();
    if n > DENSE_LIMIT {
        return Err(Error::TooLargeForDense {
            n,
            limit: DENSE_LIMIT,
        });
    }
    let sigma_max = spectral_norm_estimate(a, opts)?.value;
    let inv = DenseInverseOp::factor(a)?;
    // (AᵀA)⁻¹ = A⁻¹ A⁻ᵀ is symmetric positive definite: its norm is its largest eigenvalue
    let est = spectral_radius_estimate(|x| inv.apply_gram_inverse(x), n, opts);
    if est.value == 0.0 || !est.value.is_finite() {
        return Err(Error::Singular);
    }
    let sigma_min = 1.0 / est.value.sqrt();
    Ok(sigma_max / sigma_min)
}

/// LU factors of `A` and `Aᵀ` for repeated solves.
pub(crate) struct DenseInverseOp {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_t: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DenseInverseOp {
    pub(crate) fn factor(a: &SparseMatrix) -> Result<Self> {
        let dense = a.to_dense();
        let lu = checked_lu(dense.clone())?;
        let lu_t = checked_lu(dense.transpose())?;
        Ok(Self { lu, lu_t })
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = DVector::from_column_slice(b);
        self.lu
            .solve(&rhs)
            .expect("factor checked for singularity")
            .as_slice()
            .to_vec()
    }

    pub(crate) fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let rhs = DVector::from_column_slice(b);
        self.lu_t
            .solve(&rhs)
            .expect("factor checked for singularity")
            .as_slice()
            .to_vec()
    }

    fn apply_gram_inverse(&self, x: &[f64]) -> Vec<f64> {
        self.solve(&self.solve_transpose(x))
    }

    /// Dense `A⁻¹`.
    pub(crate) fn inverse(&self) -> DMatrix<f64> {
        self.lu
            .try_inverse()
            .expect("factor checked for singularity")
    }
}

fn checked_lu(m: DMatrix<f64>) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let n = m.nrows();
    let lu = m.lu();
    let u = lu.u();
    let diag_max = (0..n).fold(0.0f64, |acc, i| acc.max(u[(i, i)].abs()));
    let diag_min = (0..n).fold(f64::INFINITY, |acc, i| acc.min(u[(i, i)].abs()));
    if n > 0 && (diag_max == 0.0 || diag_min <= n as f64 * f64::EPSILON * diag_max) {
        return Err(Error::Singular);
    }
    Ok(lu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> PowerOptions {
        PowerOptions::default()
    }

    #[test]
    fn norm_of_diagonal_and_identity() {
        let d = SparseMatrix::from_diagonal(&[1.0, 5.0, 2.0]);
        let est = spectral_norm_estimate(&d, &opts()).unwrap();
        assert!((est.value - 5.0).abs() < 1e-6, "{est:?}");
        let i = SparseMatrix::identity(10);
        assert!((spectral_norm_estimate(&i, &opts()).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn norm_of_nilpotent_jordan_block() {
        let j = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0)]).unwrap();
        let est = spectral_norm_estimate(&j, &opts()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn norm_rejects_non_square() {
        let a = SparseMatrix::from_triplets(2, 3, &[(0, 0, 1.0)]).unwrap();
        assert!(matches!(
            spectral_norm_estimate(&a, &opts()),
            Err(Error::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn norm_of_zero_matrix() {
        let z = SparseMatrix::from_triplets(3, 3, &[]).unwrap();
        assert_eq!(spectral_norm_estimate(&z, &opts()).unwrap().value, 0.0);
    }

    #[test]
    fn radius_of_scalar_operator() {
        for n in [1, 7, 50] {
            let est =
                spectral_radius_estimate(|x| x.iter().map(|v| 0.75 * v).collect(), n, &opts());
            assert!((est.value - 0.75).abs() < 1e-12);
            assert!(est.converged);
        }
    }

    #[test]
    fn radius_of_i_minus_identity_is_zero() {
        let a = SparseMatrix::identity(5);
        let est = spectral_radius_estimate(
            |x| {
                let ax = crate::sparse::spmv(&a, x).unwrap();
                x.iter().zip(&ax).map(|(u, v)| u - v).collect()
            },
            5,
            &opts(),
        );
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn radius_flags_non_convergence() {
        // rotation by 90 degrees scaled by 0.5: complex pair, norm ratio is exact anyway
        let est = spectral_radius_estimate(|x| vec![-0.5 * x[1], 0.5 * x[0]], 2, &opts());
        assert!((est.value - 0.5).abs() < 1e-12);
        let capped = PowerOptions {
            max_iters: 3,
            ..opts()
        };
        let a = SparseMatrix::from_diagonal(&[1.0, 0.999]);
        let est = spectral_radius_estimate(|x| crate::sparse::spmv(&a, x).unwrap(), 2, &capped);
        assert!(!est.converged);
    }

    #[test]
    fn condition_numbers() {
        let i = SparseMatrix::identity(6);
        assert!((condition_number_estimate(&i, &opts()).unwrap() - 1.0).abs() < 1e-10);
        let d = SparseMatrix::from_diagonal(&[1.0, 100.0]);
        assert!((condition_number_estimate(&d, &opts()).unwrap() - 100.0).abs() < 1e-6);
    }

    #[test]
    fn condition_number_rejects_singular() {
        let s = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)],
        )
        .unwrap();
        assert!(matches!(
            condition_number_estimate(&s, &opts()),
            Err(Error::Singular)
        ));
    }
}
