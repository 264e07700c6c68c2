//! Stochastic model of an analog crossbar array performing `y ≈ M r`.
//!
//! Programming stores `M̂ = M ⊙ (1 + N^{Wm}) + N^{Wa}` once; every MVM then
//! draws fresh input and output noise:
//!
//! ```text
//! ŷ = (M̂ r̂) ⊙ (1 + N^{Om}) + N^{Oa},   r̂ = r ⊙ (1 + N^{Im}) + N^{Ia}
//! ```
//!
//! Inputs are normalized to `[-1, 1]` before the DAC, outputs are digitized
//! by the ADC over a symmetric range, and the result is mapped back to matrix
//! units. All noise is zero-mean Gaussian. Additive sigmas are expressed in
//! normalized units: weights are divided by `max|M|`, inputs by their full
//! scale, and one output unit is a full-scale weight times a full-scale
//! input. The ADC clips at `‖M̂‖_∞ / max|M| · (1 + 4σ_in)` output units.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng::{substream, StreamRng};
use crate::sparse::SparseMatrix;

/// Noise magnitudes, converter resolutions and array limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub sigma_write_mult: f64,
    pub sigma_write_add: f64,
    pub sigma_in_mult: f64,
    pub sigma_in_add: f64,
    pub sigma_out_mult: f64,
    pub sigma_out_add: f64,
    /// DAC resolution; 0 disables the converter.
    pub dac_bits: u32,
    /// ADC resolution; 0 disables the converter.
    pub adc_bits: u32,
    pub max_rows: usize,
    pub max_cols: usize,
    pub seed: u64,
    /// Input normalization. `0` rescales every input by its own `‖r‖_∞`;
    /// a positive value fixes the DAC full scale to that magnitude, so
    /// additive noise no longer shrinks with the input.
    pub input_range: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            sigma_write_mult: 5.0e-3,
            sigma_write_add: 5.0e-3,
            sigma_in_mult: 1.0e-2,
            sigma_in_add: 1.0e-2,
            sigma_out_mult: 1.0e-2,
            sigma_out_add: 1.0e-2,
            dac_bits: 7,
            adc_bits: 9,
            max_rows: 4000,
            max_cols: 4000,
            seed: 0,
            input_range: 0.0,
        }
    }
}

const CONFIG_KEYS: [&str; 12] = [
    "sigma_write_mult",
    "sigma_write_add",
    "sigma_in_mult",
    "sigma_in_add",
    "sigma_out_mult",
    "sigma_out_add",
    "dac_bits",
    "adc_bits",
    "max_rows",
    "max_cols",
    "seed",
    "input_range",
];

impl DeviceConfig {
    /// A perfect device: no noise, converters disabled.
    pub fn noiseless() -> Self {
        Self {
            sigma_write_mult: 0.0,
            sigma_write_add: 0.0,
            sigma_in_mult: 0.0,
            sigma_in_add: 0.0,
            sigma_out_mult: 0.0,
            sigma_out_add: 0.0,
            dac_bits: 0,
            adc_bits: 0,
            ..Self::default()
        }
    }

    /// Multiplies every sigma by `factor`.
    pub fn scaled_noise(mut self, factor: f64) -> Self {
        self.sigma_write_mult *= factor;
        self.sigma_write_add *= factor;
        self.sigma_in_mult *= factor;
        self.sigma_in_add *= factor;
        self.sigma_out_mult *= factor;
        self.sigma_out_add *= factor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            self.sigma_write_mult,
            self.sigma_write_add,
            self.sigma_in_mult,
            self.sigma_in_add,
            self.sigma_out_mult,
            self.sigma_out_add,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidParameter(
                "noise sigmas must be finite and >= 0".into(),
            ));
        }
        if self.dac_bits > 52 || self.adc_bits > 52 {
            return Err(Error::InvalidParameter(
                "converter bits must be <= 52".into(),
            ));
        }
        if !(self.input_range.is_finite() && self.input_range >= 0.0) {
            return Err(Error::InvalidParameter(
                "input_range must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Serializes to the flat `key = value` format.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(s, "{key} = {}", self.value_of(key));
        }
        s
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "sigma_write_mult" => format!("{:e}", self.sigma_write_mult),
            "sigma_write_add" => format!("{:e}", self.sigma_write_add),
            "sigma_in_mult" => format!("{:e}", self.sigma_in_mult),
            "sigma_in_add" => format!("{:e}", self.sigma_in_add),
            "sigma_out_mult" => format!("{:e}", self.sigma_out_mult),
            "sigma_out_add" => format!("{:e}", self.sigma_out_add),
            "dac_bits" => self.dac_bits.to_string(),
            "adc_bits" => self.adc_bits.to_string(),
            "max_rows" => self.max_rows.to_string(),
            "max_cols" => self.max_cols.to_string(),
            "seed" => self.seed.to_string(),
            "input_range" => format!("{:e}", self.input_range),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// `(key, value)` pairs in file order, for metadata blocks.
    pub fn entries(&self) -> Vec<(String, String)> {
        CONFIG_KEYS
            .iter()
            .map(|k| (k.to_string(), self.value_of(k)))
            .collect()
    }

    /// Parses the `key = value` format starting from defaults. Blank lines and
    /// `#` comments are ignored; unknown keys are rejected.
    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::DeviceConfig {
                line,
                msg: "expected 'key = value'".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::DeviceConfig {
                line,
                msg: format!("invalid {what} '{value}' for {key}"),
            };
            let real = || value.parse::<f64>().map_err(|_| bad("real"));
            match key {
                "sigma_write_mult" => cfg.sigma_write_mult = real()?,
                "sigma_write_add" => cfg.sigma_write_add = real()?,
                "sigma_in_mult" => cfg.sigma_in_mult = real()?,
                "sigma_in_add" => cfg.sigma_in_add = real()?,
                "sigma_out_mult" => cfg.sigma_out_mult = real()?,
                "sigma_out_add" => cfg.sigma_out_add = real()?,
                "input_range" => cfg.input_range = real()?,
                "dac_bits" => cfg.dac_bits = value.parse().map_err(|_| bad("count"))?,
                "adc_bits" => cfg.adc_bits = value.parse().map_err(|_| bad("count"))?,
                "max_rows" => cfg.max_rows = value.parse().map_err(|_| bad("count"))?,
                "max_cols" => cfg.max_cols = value.parse().map_err(|_| bad("count"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("integer"))?,
                _ => {
                    return Err(Error::DeviceConfig {
                        line,
                        msg: format!("unknown key '{key}'"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_kv(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_kv_string())?;
        Ok(())
    }
}

/// Uniform mid-tread quantizer over `[-1, 1]` with `2^bits - 1` levels.
///
/// Inputs are clipped to `[-1, 1]`. `bits == 0` disables quantization (and clipping).
pub fn quantize(x: f64, bits: u32) -> f64 {
    if bits == 0 {
        return x;
    }
    let half_levels = ((1u64 << (bits - 1)) - 1) as f64;
    if half_levels == 0.0 {
        return 0.0;
    }
    (x.clamp(-1.0, 1.0) * half_levels).round() / half_levels
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Per-call multiplicative noise vectors, exposed for first-order error analysis.
#[derive(Debug, Clone)]
pub struct MvmNoise {
    pub input_mult: Vec<f64>,
    pub output_mult: Vec<f64>,
}

/// A crossbar array holding a programmed matrix.
#[derive(Debug, Clone)]
pub struct CrossbarDevice {
    /// Programmed conductances expressed in matrix units (`M̂`).
    weights: DMatrix<f64>,
    /// `max|M|`, the conductance normalization.
    scale: f64,
    /// ADC full scale in normalized output units.
    output_bound: f64,
    config: DeviceConfig,
    rng: StreamRng,
}

impl CrossbarDevice {
    /// Writes `m` to a fresh array, sampling the persistent write noise.
    pub fn program(m: &SparseMatrix, config: &DeviceConfig) -> Result<Self> {
        Self::program_on_stream(m, config, 0)
    }

    /// Like [`program`](Self::program) but draws from substream `stream` of
    /// `config.seed`, for repetitions that must be independent.
    pub fn program_on_stream(m: &SparseMatrix, config: &DeviceConfig, stream: u64) -> Result<Self> {
        config.validate()?;
        if m.n_rows() > config.max_rows || m.n_cols() > config.max_cols {
            return Err(Error::ArrayTooLarge {
                rows: m.n_rows(),
                cols: m.n_cols(),
                max_rows: config.max_rows,
                max_cols: config.max_cols,
            });
        }
        let scale = m.max_abs();
        if scale == 0.0 {
            return Err(Error::ZeroMatrix);
        }
        let mut rng = substream(config.seed, stream);
        let dense = m.to_dense();
        let (rows, cols) = (m.n_rows(), m.n_cols());
        let add_sigma = config.sigma_write_add * scale;
        let mut weights = DMatrix::zeros(rows, cols);
        // column-major sampling order, two draws per cell
        for j in 0..cols {
            for i in 0..rows {
                let g_mult = gaussian(&mut rng);
                let g_add = gaussian(&mut rng);
                weights[(i, j)] =
                    dense[(i, j)] * (1.0 + config.sigma_write_mult * g_mult) + add_sigma * g_add;
            }
        }
        let row_abs_max = weights
            .row_iter()
            .map(|row| row.iter().map(|w| w.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let output_bound =
            row_abs_max / scale * (1.0 + 4.0 * (config.sigma_in_mult + config.sigma_in_add));
        Ok(Self {
            weights,
            scale,
            output_bound,
            config: *config,
            rng,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.weights.ncols()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    /// ADC full scale in normalized units (`‖M̂‖_∞ / scale · (1 + 4σ_in)`).
    pub fn output_bound(&self) -> f64 {
        self.output_bound
    }

    /// Programmed matrix `M̂` in matrix units.
    pub fn programmed_matrix(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Replaces the per-call noise stream; the programmed weights are kept.
    pub fn reseed_noise(&mut self, stream: u64) {
        self.rng = substream(self.config.seed, stream);
    }

    /// One noisy analog MVM `ŷ ≈ M r`.
    pub fn analog_mvm(&mut self, r: &[f64]) -> Result<Vec<f64>> {
        self.analog_mvm_traced(r).map(|(y, _)| y)
    }

    /// [`analog_mvm`](Self::analog_mvm) that also returns the multiplicative
    /// input/output noise vectors it drew.
    pub fn analog_mvm_traced(&mut self, r: &[f64]) -> Result<(Vec<f64>, MvmNoise)> {
        check_len(self.n_cols(), r.len())?;
        let cfg = self.config;
        let input_scale = if cfg.input_range > 0.0 {
            cfg.input_range
        } else {
            let s = crate::sparse::norm_inf(r);
            if s > 0.0 {
                s
            } else {
                1.0
            }
        };

        let mut input_mult = Vec::with_capacity(r.len());
        let mut u = DVector::zeros(r.len());
        for (j, &rj) in r.iter().enumerate() {
            let q = quantize(rj / input_scale, cfg.dac_bits);
            let n_mult = cfg.sigma_in_mult * gaussian(&mut self.rng);
            let n_add = cfg.sigma_in_add * gaussian(&mut self.rng);
            input_mult.push(n_mult);
            u[j] = q * (1.0 + n_mult) + n_add;
        }

        let y = &self.weights * &u;
        let bound = self.output_bound;
        let mut output_mult = Vec::with_capacity(y.len());
        let mut out = Vec::with_capacity(y.len());
        for &yi in y.iter() {
            let n_mult = cfg.sigma_out_mult * gaussian(&mut self.rng);
            let n_add = cfg.sigma_out_add * gaussian(&mut self.rng);
            output_mult.push(n_mult);
            let mut v = yi / self.scale * (1.0 + n_mult) + n_add;
            if cfg.adc_bits > 0 {
                v = bound * quantize(v / bound, cfg.adc_bits);
            }
            out.push(v * self.scale * input_scale);
        }
        Ok((
            out,
            MvmNoise {
                input_mult,
                output_mult,
            },
        ))
    }
}

/// One draw of the first-order error matrix
/// `E = M ⊙ (N^{Wm} + 1⊗N^{Im} + N^{Om}⊗1) + N^{Wa}`.
///
/// Draw order: `N^{Im}` (per column), `N^{Om}` (per row), `N^{Wa}` over every
/// cell in column-major order, then `N^{Wm}` over the stored entries of `M`.
pub fn sample_error_matrix<R: Rng + ?Sized>(
    m: &SparseMatrix,
    config: &DeviceConfig,
    rng: &mut R,
) -> DMatrix<f64> {
    let (rows, cols) = (m.n_rows(), m.n_cols());
    let scale = m.max_abs();
    let n_in: Vec<f64> = (0..cols)
        .map(|_| config.sigma_in_mult * gaussian(rng))
        .collect();
    let n_out: Vec<f64> = (0..rows)
        .map(|_| config.sigma_out_mult * gaussian(rng))
        .collect();
    let add_sigma = config.sigma_write_add * scale;
    let mut e = DMatrix::from_fn(rows, cols, |_, _| 0.0);
    for v in e.iter_mut() {
        *v = add_sigma * gaussian(rng);
    }
    for (i, j, mij) in m.triplets() {
        let n_w = config.sigma_write_mult * gaussian(rng);
        e[(i, j)] += mij * (n_w + n_in[j] + n_out[i]);
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::spmv;

    fn test_matrix() -> SparseMatrix {
        SparseMatrix::from_triplets(
            4,
            4,
            &[
                (0, 0, 2.0),
                (0, 1, -0.5),
                (1, 1, 1.5),
                (2, 0, 0.25),
                (2, 2, 3.0),
                (3, 3, -1.0),
                (3, 1, 0.75),
            ],
        )
        .unwrap()
    }

    #[test]
    fn noiseless_program_is_exact() {
        let m = test_matrix();
        let dev = CrossbarDevice::program(&m, &DeviceConfig::noiseless()).unwrap();
        assert_eq!(*dev.programmed_matrix(), m.to_dense());
        assert_eq!(dev.scale(), 3.0);
    }

    #[test]
    fn noiseless_mvm_matches_spmv() {
        let m = test_matrix();
        let mut dev = CrossbarDevice::program(&m, &DeviceConfig::noiseless()).unwrap();
        let r = [0.3, -1.2, 2.5, 0.01];
        let y = dev.analog_mvm(&r).unwrap();
        let exact = spmv(&m, &r).unwrap();
        for (a, b) in y.iter().zip(&exact) {
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }

    #[test]
    fn zero_input_gives_zero_without_additive_noise() {
        let m = test_matrix();
        let cfg = DeviceConfig {
            sigma_in_add: 0.0,
            sigma_out_add: 0.0,
            dac_bits: 0,
            adc_bits: 0,
            ..DeviceConfig::default()
        };
        let mut dev = CrossbarDevice::program(&m, &cfg).unwrap();
        assert_eq!(dev.analog_mvm(&[0.0; 4]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn array_size_and_zero_matrix_errors() {
        let tall = SparseMatrix::from_triplets(4001, 10, &[(0, 0, 1.0)]).unwrap();
        assert!(matches!(
            CrossbarDevice::program(&tall, &DeviceConfig::default()),
            Err(Error::ArrayTooLarge { rows: 4001, .. })
        ));
        let zero = SparseMatrix::from_triplets(3, 3, &[]).unwrap();
        assert!(matches!(
            CrossbarDevice::program(&zero, &DeviceConfig::default()),
            Err(Error::ZeroMatrix)
        ));
    }

    #[test]
    fn mvm_dimension_mismatch() {
        let mut dev = CrossbarDevice::program(&test_matrix(), &DeviceConfig::default()).unwrap();
        assert!(dev.analog_mvm(&[1.0; 3]).is_err());
    }

    #[test]
    fn seeded_devices_are_identical() {
        let m = test_matrix();
        let cfg = DeviceConfig {
            seed: 42,
            ..DeviceConfig::default()
        };
        let mut a = CrossbarDevice::program(&m, &cfg).unwrap();
        let mut b = CrossbarDevice::program(&m, &cfg).unwrap();
        assert_eq!(a.programmed_matrix(), b.programmed_matrix());
        for r in [[1.0, 2.0, 3.0, 4.0], [-0.1, 0.0, 0.5, 0.2]] {
            assert_eq!(a.analog_mvm(&r).unwrap(), b.analog_mvm(&r).unwrap());
        }
        let c = CrossbarDevice::program_on_stream(&m, &cfg, 1).unwrap();
        assert_ne!(a.programmed_matrix(), c.programmed_matrix());
    }

    #[test]
    fn quantizer_levels() {
        for bits in 1..=9u32 {
            let mut levels: Vec<f64> = (-4000..=4000)
                .map(|k| quantize(k as f64 / 4000.0, bits))
                .collect();
            levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
            levels.dedup();
            assert_eq!(levels.len(), (1usize << bits) - 1, "bits {bits}");
        }
        assert_eq!(quantize(3.0, 7), 1.0);
        assert_eq!(quantize(-3.0, 7), -1.0);
        assert_eq!(quantize(0.123, 0), 0.123);
    }

    #[test]
    fn error_matrix_zero_and_additive_only() {
        let m = test_matrix();
        let mut rng = substream(1, 0);
        let e = sample_error_matrix(&m, &DeviceConfig::noiseless(), &mut rng);
        assert!(e.iter().all(|&v| v == 0.0));

        let cfg = DeviceConfig {
            sigma_write_add: 0.1,
            ..DeviceConfig::noiseless()
        };
        // additive-only entries are i.i.d. N(0, (0.1 * scale)^2) on every cell
        let mut sum_sq = 0.0;
        let draws = 4000;
        for _ in 0..draws {
            let e = sample_error_matrix(&m, &cfg, &mut rng);
            sum_sq += e.iter().map(|v| v * v).sum::<f64>();
        }
        let var = sum_sq / (draws * 16) as f64;
        let expected = (0.1f64 * 3.0).powi(2);
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    }

    #[test]
    fn config_kv_round_trip_and_errors() {
        let cfg = DeviceConfig {
            sigma_out_add: 0.02,
            dac_bits: 5,
            seed: 99,
            input_range: 0.5,
            ..DeviceConfig::default()
        };
        assert_eq!(DeviceConfig::parse_kv(&cfg.to_kv_string()).unwrap(), cfg);
        let partial = DeviceConfig::parse_kv("# only bits\nadc_bits = 11\n\n").unwrap();
        assert_eq!(partial.adc_bits, 11);
        assert_eq!(partial.sigma_in_mult, 1.0e-2);
        assert!(DeviceConfig::parse_kv("bogus = 1").is_err());
        assert!(DeviceConfig::parse_kv("dac_bits = seven").is_err());
        assert!(DeviceConfig::parse_kv("dac_bits 7").is_err());
        assert!(DeviceConfig::parse_kv("sigma_in_add = -1").is_err());
    }
}
