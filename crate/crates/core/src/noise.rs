//! Sufficient conditions for convergence under analog noise, and Monte-Carlo
//! checks of the error-norm bounds.
//!
//! The per-MVM perturbation of `M` is modeled by the error matrix `E`
//! (see [`crate::device::sample_error_matrix`]). Contraction of the hybrid
//! iteration is guaranteed when `‖E‖ < (1 − ‖I − MA‖) / ‖A‖`; if the entries
//! of `E` have mean `μ` and standard deviation `σ`, then
//! `E‖E‖ ≤ n √(μ² + σ²)` and `Var‖E‖ ≤ n² σ²`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::device::{sample_error_matrix, DeviceConfig};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream};
use crate::sparse::{LinearOperator, SparseMatrix};
use crate::spectral::{spectral_norm_estimate, DenseInverseOp, PowerOptions};

/// Largest `n` for which [`delta_margin`] forms `A⁻¹`.
pub const DELTA_LIMIT: usize = 2000;

/// `x ↦ x − M A x` without materializing `MA`.
pub struct IterationOperator<'a> {
    pub a: &'a SparseMatrix,
    pub m: &'a SparseMatrix,
}

impl LinearOperator for IterationOperator<'_> {
    fn nrows(&self) -> usize {
        self.m.n_rows()
    }

    fn ncols(&self) -> usize {
        self.a.n_cols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut ax = vec![0.0; self.a.n_rows()];
        self.a.mul_vec_into(x, &mut ax);
        self.m.mul_vec_into(&ax, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi - *yi;
        }
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        let mut mtx = vec![0.0; self.m.n_cols()];
        self.m.mul_transpose_vec_into(x, &mut mtx);
        self.a.mul_transpose_vec_into(&mtx, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi - *yi;
        }
    }
}

/// Result of [`convergence_margin`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceMargin {
    pub norm_i_minus_ma: f64,
    pub norm_a: f64,
    /// `(1 − ‖I − MA‖₂) / ‖A‖₂`; nonpositive means no noise budget.
    pub margin: f64,
    /// `margin / n`, the entrywise σ that suffices.
    pub sigma_sufficient: f64,
    /// Both power iterations met their tolerance.
    pub converged: bool,
}

impl ConvergenceMargin {
    pub fn is_positive(&self) -> bool {
        self.margin > 0.0
    }
}

/// Admissible `‖E‖₂` budget from the contraction of `I − MA`.
pub fn convergence_margin(
    a: &SparseMatrix,
    m: &SparseMatrix,
    opts: &PowerOptions,
) -> Result<ConvergenceMargin> {
    if !a.is_square() || m.n_rows() != a.n_rows() || m.n_cols() != a.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: a.n_rows(),
            found: m.n_rows(),
        });
    }
    let n = a.n_rows();
    let it = spectral_norm_estimate(&IterationOperator { a, m }, opts)?;
    let na = spectral_norm_estimate(a, opts)?;
    if na.value == 0.0 {
        return Err(Error::Singular);
    }
    let margin = (1.0 - it.value) / na.value;
    Ok(ConvergenceMargin {
        norm_i_minus_ma: it.value,
        norm_a: na.value,
        margin,
        sigma_sufficient: margin / n as f64,
        converged: it.converged && na.converged,
    })
}

/// Result of [`delta_margin`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaMargin {
    pub norm_a: f64,
    /// `‖M − A⁻¹‖₂`.
    pub norm_delta: f64,
    /// `1/‖A‖₂ − ‖M − A⁻¹‖₂`.
    pub budget: f64,
    /// `budget / n`.
    pub sigma_sufficient: f64,
}

/// Admissible `‖E‖₂` budget from the distance of `M` to `A⁻¹`, via a dense inverse.
pub fn delta_margin(
    a: &SparseMatrix,
    m: &SparseMatrix,
    opts: &PowerOptions,
) -> Result<DeltaMargin> {
    if !a.is_square() || m.n_rows() != a.n_rows() || m.n_cols() != a.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: a.n_rows(),
            found: m.n_rows(),
        });
    }
    let n = a.n_rows();
    if n > DELTA_LIMIT {
        return Err(Error::TooLargeForDense {
            n,
            limit: DELTA_LIMIT,
        });
    }
    let inv = DenseInverseOp::factor(a)?.inverse();
    let delta: DMatrix<f64> = m.to_dense() - inv;
    let norm_delta = spectral_norm_estimate(&delta, opts)?.value;
    let norm_a = spectral_norm_estimate(a, opts)?.value;
    let budget = 1.0 / norm_a - norm_delta;
    Ok(DeltaMargin {
        norm_a,
        norm_delta,
        budget,
        sigma_sufficient: budget / n as f64,
    })
}

/// Closed-form bounds on `‖E‖` for i.i.d. entries with mean `μ`, std `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNormBounds {
    /// `n √(μ² + σ²)`.
    pub mean: f64,
    /// `n² (μ² + σ²)`.
    pub second_moment: f64,
    /// `n² σ²`.
    pub variance: f64,
}

/// Evaluates the bounds; `zero_mean` drops `μ`, as happens after averaging
/// many iterations.
pub fn error_norm_bounds(n: usize, mu: f64, sigma: f64, zero_mean: bool) -> ErrorNormBounds {
    let n = n as f64;
    let mu = if zero_mean { 0.0 } else { mu };
    let s2 = mu * mu + sigma * sigma;
    ErrorNormBounds {
        mean: n * s2.sqrt(),
        second_moment: n * n * s2,
        variance: n * n * sigma * sigma,
    }
}

/// Entrywise moments of `E` implied by `config` and `m`.
///
/// All noise is zero-mean, so `μ = 0`. Entry `(i, j)` has variance
/// `M_ij² (σ_wm² + σ_im² + σ_om²) + (σ_wa · max|M|)²`; the largest is
/// reported as `σ`.
pub fn effective_moments(m: &SparseMatrix, config: &DeviceConfig) -> (f64, f64) {
    let mult = config.sigma_write_mult.powi(2)
        + config.sigma_in_mult.powi(2)
        + config.sigma_out_mult.powi(2);
    let add = (config.sigma_write_add * m.max_abs()).powi(2);
    let max_sq = m.values().iter().fold(0.0f64, |acc, v| acc.max(v * v));
    (0.0, (max_sq * mult + add).sqrt())
}

/// Certification outcome for a device configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Verdict {
    ConvergenceSufficient,
    NotCertified,
    MarginNonpositive,
}

impl Verdict {
    pub fn from_margin(margin: f64, sigma_sufficient: f64, sigma: f64) -> Self {
        if margin <= 0.0 {
            Verdict::MarginNonpositive
        } else if sigma < sigma_sufficient {
            Verdict::ConvergenceSufficient
        } else {
            Verdict::NotCertified
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::ConvergenceSufficient => "CONVERGENCE-SUFFICIENT",
            Verdict::NotCertified => "NOT CERTIFIED",
            Verdict::MarginNonpositive => "MARGIN NONPOSITIVE",
        }
    }
}

/// Monte-Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub trials: usize,
    /// Bootstrap resamples for the confidence bounds.
    pub bootstrap: usize,
    /// One-sided confidence level of the bootstrap quantile.
    pub confidence: f64,
    /// Power iteration for `‖E‖₂`; an early stop only lowers the estimate.
    pub power: PowerOptions,
    /// Power iteration for the margins.
    pub margin_power: PowerOptions,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            trials: 200,
            bootstrap: 1000,
            confidence: 0.99,
            power: PowerOptions {
                tol: 1e-4,
                max_iters: 30,
                ..PowerOptions::default()
            },
            margin_power: PowerOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBoundReport {
    pub n: usize,
    pub trials: usize,
    pub norm_i_minus_ma: f64,
    pub norm_a: f64,
    pub margin: f64,
    pub sigma_sufficient: f64,
    pub mu: f64,
    pub sigma: f64,
    pub frobenius_samples: Vec<f64>,
    pub spectral_samples: Vec<f64>,
    pub mean_frobenius: f64,
    pub var_frobenius: f64,
    /// Bootstrap lower/upper confidence bounds of the mean `‖E‖_F`.
    pub mean_frobenius_lower: f64,
    pub mean_frobenius_upper: f64,
    /// Bootstrap lower/upper confidence bounds of the variance of `‖E‖_F`.
    pub var_frobenius_lower: f64,
    pub var_frobenius_upper: f64,
    pub mean_bound: f64,
    pub second_moment_bound: f64,
    pub var_bound: f64,
    /// The bound is not rejected: the lower confidence bound of the mean does not exceed it.
    pub mean_within_bound: bool,
    /// Same test for the variance.
    pub var_within_bound: bool,
    /// `‖E‖₂ ≤ ‖E‖_F` held on every draw.
    pub spectral_below_frobenius: bool,
    /// Share of draws with `‖E‖₂ < margin`.
    pub fraction_within_margin: f64,
    pub verdict: Verdict,
}

/// Samples `E` `opts.trials` times and compares its norms with the bounds.
///
/// Trial `t` draws from its own substream, so the report is independent of
/// evaluation order.
pub fn monte_carlo_validate(
    a: &SparseMatrix,
    m: &SparseMatrix,
    config: &DeviceConfig,
    opts: &McOptions,
) -> Result<NoiseBoundReport> {
    if opts.trials < 2 {
        return Err(Error::InvalidParameter(
            "at least two trials are required".into(),
        ));
    }
    let n = a.n_rows();
    let cm = convergence_margin(a, m, &opts.margin_power)?;
    let (mu, sigma) = effective_moments(m, config);
    let bounds = error_norm_bounds(n, mu, sigma, false);
    let seed = derive_seed(config.seed, "error-matrix");

    let mut frob = Vec::with_capacity(opts.trials);
    let mut spec = Vec::with_capacity(opts.trials);
    for t in 0..opts.trials {
        let mut rng = substream(seed, t as u64);
        let e = sample_error_matrix(m, config, &mut rng);
        frob.push(e.norm());
        spec.push(spectral_norm_estimate(&e, &opts.power)?.value);
    }

    let (mean_f, var_f) = mean_var(&frob);
    let ci = bootstrap(&frob, opts, derive_seed(config.seed, "bootstrap"));
    let spectral_below_frobenius = spec
        .iter()
        .zip(&frob)
        .all(|(s, f)| *s <= *f * (1.0 + 1e-12));
    let within = spec.iter().filter(|&&s| s < cm.margin).count();

    Ok(NoiseBoundReport {
        n,
        trials: opts.trials,
        norm_i_minus_ma: cm.norm_i_minus_ma,
        norm_a: cm.norm_a,
        margin: cm.margin,
        sigma_sufficient: cm.sigma_sufficient,
        mu,
        sigma,
        mean_frobenius: mean_f,
        var_frobenius: var_f,
        mean_frobenius_lower: ci.mean_lower,
        mean_frobenius_upper: ci.mean_upper,
        var_frobenius_lower: ci.var_lower,
        var_frobenius_upper: ci.var_upper,
        mean_bound: bounds.mean,
        second_moment_bound: bounds.second_moment,
        var_bound: bounds.variance,
        mean_within_bound: ci.mean_lower <= bounds.mean,
        var_within_bound: ci.var_lower <= bounds.variance,
        spectral_below_frobenius,
        fraction_within_margin: within as f64 / opts.trials as f64,
        verdict: Verdict::from_margin(cm.margin, cm.sigma_sufficient, sigma),
        frobenius_samples: frob,
        spectral_samples: spec,
    })
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

struct Interval {
    mean_lower: f64,
    mean_upper: f64,
    var_lower: f64,
    var_upper: f64,
}

/// One-sided percentile-bootstrap bounds of the mean and variance.
fn bootstrap(x: &[f64], opts: &McOptions, seed: u64) -> Interval {
    let mut rng = substream(seed, 0);
    let mut means = Vec::with_capacity(opts.bootstrap);
    let mut vars = Vec::with_capacity(opts.bootstrap);
    let mut sample = vec![0.0; x.len()];
    for _ in 0..opts.bootstrap {
        for s in sample.iter_mut() {
            *s = x[rng.random_range(0..x.len())];
        }
        let (m, v) = mean_var(&sample);
        means.push(m);
        vars.push(v);
    }
    let lo = 1.0 - opts.confidence;
    Interval {
        mean_lower: quantile(&mut means, lo),
        mean_upper: quantile(&mut means, opts.confidence),
        var_lower: quantile(&mut vars, lo),
        var_upper: quantile(&mut vars, opts.confidence),
    }
}

fn quantile(v: &mut [f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let idx = ((v.len() as f64 * q).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd() -> SparseMatrix {
        SparseMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 2.0),
                (0, 1, -0.5),
                (1, 0, -0.5),
                (1, 1, 1.5),
                (1, 2, 0.25),
                (2, 1, 0.25),
                (2, 2, 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn bounds_closed_forms() {
        assert_eq!(
            error_norm_bounds(1, 0.0, 1.0, false),
            ErrorNormBounds {
                mean: 1.0,
                second_moment: 1.0,
                variance: 1.0
            }
        );
        assert_eq!(error_norm_bounds(10, 3.0, 4.0, false).mean, 50.0);
        let b = error_norm_bounds(512, 7.0, 1e-2, true);
        assert!((b.mean - 5.12).abs() < 1e-12);
        assert!((b.second_moment - 512.0f64.powi(2) * 1e-4).abs() < 1e-9);
    }

    #[test]
    fn margin_with_exact_inverse() {
        let a = SparseMatrix::from_diagonal(&[2.0, 1.0, 1.5]);
        let m = SparseMatrix::from_diagonal(&[0.5, 1.0, 1.0 / 1.5]);
        let cm = convergence_margin(&a, &m, &PowerOptions::default()).unwrap();
        assert!(cm.norm_i_minus_ma < 1e-12, "{cm:?}");
        assert!((cm.margin - 0.5).abs() < 1e-6);
        assert!((cm.sigma_sufficient - 0.5 / 3.0).abs() < 1e-6);
        let dm = delta_margin(&a, &m, &PowerOptions::default()).unwrap();
        assert!((dm.budget - 0.5).abs() < 1e-6);
    }

    #[test]
    fn margin_with_zero_preconditioner() {
        let a = SparseMatrix::identity(4);
        let m = SparseMatrix::from_triplets(4, 4, &[]).unwrap();
        let cm = convergence_margin(&a, &m, &PowerOptions::default()).unwrap();
        assert!((cm.norm_i_minus_ma - 1.0).abs() < 1e-12);
        assert!(!cm.is_positive());
        assert_eq!(
            Verdict::from_margin(cm.margin, cm.sigma_sufficient, 0.0),
            Verdict::MarginNonpositive
        );
        let dm = delta_margin(&a, &m, &PowerOptions::default()).unwrap();
        assert!(dm.budget.abs() < 1e-12);
    }

    #[test]
    fn delta_margin_guard() {
        let a = SparseMatrix::identity(DELTA_LIMIT + 1);
        assert!(matches!(
            delta_margin(&a, &a, &PowerOptions::default()),
            Err(Error::TooLargeForDense { .. })
        ));
    }

    #[test]
    fn monte_carlo_noiseless() {
        let a = spd();
        let m = SparseMatrix::from_diagonal(&[0.5, 0.66, 1.0]);
        let opts = McOptions {
            trials: 30,
            ..McOptions::default()
        };
        let rep = monte_carlo_validate(&a, &m, &DeviceConfig::noiseless(), &opts).unwrap();
        assert!(rep.frobenius_samples.iter().all(|&f| f == 0.0));
        assert!(rep.margin > 0.0);
        assert_eq!(rep.fraction_within_margin, 1.0);
        assert!(rep.mean_within_bound && rep.var_within_bound && rep.spectral_below_frobenius);
        assert_eq!(rep.verdict, Verdict::ConvergenceSufficient);
    }

    #[test]
    fn monte_carlo_additive_only_concentrates() {
        let n = 40;
        let a = SparseMatrix::identity(n);
        let m = SparseMatrix::identity(n);
        let cfg = DeviceConfig {
            sigma_write_add: 1e-2,
            seed: 3,
            ..DeviceConfig::noiseless()
        };
        let opts = McOptions {
            trials: 50,
            ..McOptions::default()
        };
        let rep = monte_carlo_validate(&a, &m, &cfg, &opts).unwrap();
        let expected = n as f64 * 1e-2;
        assert!((rep.mean_frobenius / expected - 1.0).abs() < 0.05);
        assert!(rep.mean_within_bound);
        // margin 1, so σ = 0.01 < 1/40 certifies
        assert_eq!(rep.verdict, Verdict::ConvergenceSufficient);
    }

    #[test]
    fn report_is_deterministic() {
        let a = spd();
        let m = SparseMatrix::from_diagonal(&[0.5, 0.66, 1.0]);
        let cfg = DeviceConfig {
            seed: 11,
            ..DeviceConfig::default()
        };
        let opts = McOptions {
            trials: 30,
            ..McOptions::default()
        };
        let r1 = monte_carlo_validate(&a, &m, &cfg, &opts).unwrap();
        let r2 = monte_carlo_validate(&a, &m, &cfg, &opts).unwrap();
        assert_eq!(r1, r2);
    }
}
