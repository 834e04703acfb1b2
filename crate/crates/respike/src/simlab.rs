//! Scenario generators and the Monte Carlo engine: null studies of the
//! residual-spike extremes and power studies against the classical
//! baselines, all reproducible under seeded per-replicate RNG streams.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nulllaw::NullLaw;
use crate::testkit::{baseline_statistics, quantile, residual_spike_test, Variant};

/// Data-generating family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Gaussian entries with an AR(rho) chain across observations.
    ArNormal,
    /// Columns drawn as multivariate Student t with 8 degrees of freedom.
    StudentT8,
    /// Rows drawn as ARMA(2,2) processes, globally trace-standardized.
    Arma,
}

fn default_arma_ar() -> Vec<f64> {
    vec![0.6, 0.2]
}
fn default_arma_ma() -> Vec<f64> {
    vec![0.5, 0.2]
}
fn default_theta() -> f64 {
    5000.0
}
fn default_replicates() -> usize {
    200
}
fn default_alpha() -> f64 {
    0.05
}
fn default_null_reps() -> usize {
    200
}

/// One alternative-hypothesis cell of a power study.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PowerCell {
    pub theta_x: f64,
    pub theta_y: f64,
    #[serde(default)]
    pub u_x: usize,
    #[serde(default)]
    pub u_y: usize,
}

/// Declarative simulation scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub family: Family,
    pub m: usize,
    pub n_x: usize,
    pub n_y: usize,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_arma_ar")]
    pub arma_ar: Vec<f64>,
    #[serde(default = "default_arma_ma")]
    pub arma_ma: Vec<f64>,
    #[serde(default = "default_theta")]
    pub theta_x: f64,
    #[serde(default = "default_theta")]
    pub theta_y: f64,
    #[serde(default)]
    pub u_x: usize,
    #[serde(default)]
    pub u_y: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Replicates used to calibrate baseline null quantiles in power studies.
    #[serde(default = "default_null_reps")]
    pub null_reps: usize,
    /// Alternative cells for power studies.
    #[serde(default)]
    pub cells: Vec<PowerCell>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n_x == 0 || self.n_y == 0 {
            return Err(Error::Config("m, n_x, n_y must be positive".into()));
        }
        if self.rho.abs() >= 1.0 {
            return Err(Error::Config(format!(
                "AR parameter must satisfy |rho| < 1, got {}",
                self.rho
            )));
        }
        if self.u_x >= self.m || self.u_y >= self.m {
            return Err(Error::Config("perturbation index out of range".into()));
        }
        for cell in &self.cells {
            if cell.u_x >= self.m || cell.u_y >= self.m {
                return Err(Error::Config("cell perturbation index out of range".into()));
            }
        }
        Ok(())
    }
}

/// Empirical versus theoretical moments of one statistic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub stat_name: String,
    pub empirical_mean: f64,
    pub empirical_sd: f64,
    pub theory_mean: f64,
    pub theory_sd: f64,
    pub replicates: usize,
}

/// Detection rates of the residual-spike test and the baselines in one cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerRow {
    pub theta_x: f64,
    pub theta_y: f64,
    pub u_x: usize,
    pub u_y: usize,
    pub rate_t: f64,
    pub rate_t1: f64,
    pub rate_t2: f64,
    pub rate_t3: f64,
    pub replicates: usize,
}

fn stream_rng(seed: u64, replicate: usize, group: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 * 4 + group);
    rng
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Array2<f64> {
    let mut z = Array2::<f64>::zeros((m, n));
    for v in z.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    z
}

fn generate_ar(rng: &mut ChaCha8Rng, m: usize, n: usize, rho: f64) -> Array2<f64> {
    let mut z = Array2::<f64>::zeros((m, n));
    let innov = (1.0 - rho * rho).sqrt();
    for j in 0..n {
        for i in 0..m {
            let eps: f64 = StandardNormal.sample(rng);
            z[[i, j]] = if j == 0 {
                eps
            } else {
                rho * z[[i, j - 1]] + innov * eps
            };
        }
    }
    z
}

fn generate_student(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Array2<f64> {
    let chi = ChiSquared::new(8.0).expect("chi-squared parameter");
    let mut z = Array2::<f64>::zeros((m, n));
    for j in 0..n {
        let draw: f64 = chi.sample(rng);
        let scale = (draw / 8.0).sqrt();
        for i in 0..m {
            let eps: f64 = StandardNormal.sample(rng);
            z[[i, j]] = eps / scale;
        }
    }
    z
}

const ARMA_BURN_IN: usize = 200;

fn generate_arma(rng: &mut ChaCha8Rng, m: usize, n: usize, ar: &[f64], ma: &[f64]) -> Array2<f64> {
    let mut z = Array2::<f64>::zeros((m, n));
    let p = ar.len();
    let q = ma.len();
    for i in 0..m {
        let mut xs = vec![0.0f64; ARMA_BURN_IN + n];
        let mut eps = vec![0.0f64; ARMA_BURN_IN + n];
        for t in 0..xs.len() {
            let e: f64 = StandardNormal.sample(rng);
            eps[t] = e;
            let mut v = e;
            for (k, &a) in ar.iter().enumerate().take(p) {
                if t > k {
                    v += a * xs[t - k - 1];
                }
            }
            for (k, &b) in ma.iter().enumerate().take(q) {
                if t > k {
                    v += b * eps[t - k - 1];
                }
            }
            xs[t] = v;
        }
        for j in 0..n {
            z[[i, j]] = xs[ARMA_BURN_IN + j];
        }
    }
    // standardize globally so the estimated covariance has trace m
    let ss: f64 = z.iter().map(|v| v * v).sum();
    let scale = ((m * n) as f64 / ss).sqrt();
    z.mapv_inplace(|v| v * scale);
    z
}

fn generate_group(config: &ScenarioConfig, rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    match config.family {
        Family::ArNormal => {
            if config.rho == 0.0 {
                gaussian_matrix(rng, config.m, n)
            } else {
                generate_ar(rng, config.m, n, config.rho)
            }
        }
        Family::StudentT8 => generate_student(rng, config.m, n),
        Family::Arma => generate_arma(rng, config.m, n, &config.arma_ar, &config.arma_ma),
    }
}

/// Generate the raw (unperturbed) data pair for one replicate. Identical
/// (seed, replicate) pairs give bit-identical data regardless of threading.
pub fn generate(config: &ScenarioConfig, replicate_index: usize) -> (Array2<f64>, Array2<f64>) {
    let mut rng_x = stream_rng(config.seed, replicate_index, 0);
    let mut rng_y = stream_rng(config.seed, replicate_index, 1);
    (
        generate_group(config, &mut rng_x, config.n_x),
        generate_group(config, &mut rng_y, config.n_y),
    )
}

/// Scale one data row by sqrt(theta): the action of the square root of a
/// canonical rank-one spike.
pub fn apply_perturbation(data: &mut Array2<f64>, theta: f64, u_index: usize) {
    let s = theta.sqrt();
    for v in data.row_mut(u_index).iter_mut() {
        *v *= s;
    }
}

/// One null-study replicate: observed extremes plus the law fitted from the
/// realized bulks.
#[derive(Debug, Clone)]
pub struct NullDraw {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub law: NullLaw,
}

/// Simulate the null distribution of the residual-spike extremes.
pub fn run_null_draws(config: &ScenarioConfig) -> Result<Vec<NullDraw>> {
    config.validate()?;
    if config.theta_x != config.theta_y || config.u_x != config.u_y {
        return Err(Error::NotNull);
    }
    let draws: Vec<Result<NullDraw>> = (0..config.replicates)
        .into_par_iter()
        .map(|rep| {
            let (mut x, mut y) = generate(config, rep);
            apply_perturbation(&mut x, config.theta_x, config.u_x);
            apply_perturbation(&mut y, config.theta_y, config.u_y);
            let report =
                residual_spike_test(&x, &y, config.alpha, Variant::BothFiltered, false)?;
            Ok(NullDraw {
                lambda_max: report.lambda_max_obs,
                lambda_min: report.lambda_min_obs,
                law: report.law,
            })
        })
        .collect();
    draws.into_iter().collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Null study summaries for the largest and smallest residual spike.
pub fn run_null_study(config: &ScenarioConfig) -> Result<Vec<MonteCarloSummary>> {
    let draws = run_null_draws(config)?;
    let reps = draws.len();
    let root_m = (config.m as f64).sqrt();
    let maxes: Vec<f64> = draws.iter().map(|d| d.lambda_max).collect();
    let mins: Vec<f64> = draws.iter().map(|d| d.lambda_min).collect();
    let (emp_max, emp_max_sd) = mean_sd(&maxes);
    let (emp_min, emp_min_sd) = mean_sd(&mins);
    let theory_max = draws.iter().map(|d| d.law.lambda_plus).sum::<f64>() / reps as f64;
    let theory_max_sd =
        draws.iter().map(|d| d.law.sigma_plus).sum::<f64>() / reps as f64 / root_m;
    let theory_min = draws.iter().map(|d| d.law.lambda_minus).sum::<f64>() / reps as f64;
    let theory_min_sd =
        draws.iter().map(|d| d.law.sigma_minus).sum::<f64>() / reps as f64 / root_m;
    Ok(vec![
        MonteCarloSummary {
            stat_name: "lambda_max".into(),
            empirical_mean: emp_max,
            empirical_sd: emp_max_sd,
            theory_mean: theory_max,
            theory_sd: theory_max_sd,
            replicates: reps,
        },
        MonteCarloSummary {
            stat_name: "lambda_min".into(),
            empirical_mean: emp_min,
            empirical_sd: emp_min_sd,
            theory_mean: theory_min,
            theory_sd: theory_min_sd,
            replicates: reps,
        },
    ])
}

/// Power study over the configured alternative cells. Baseline quantiles are
/// calibrated per cell by simulating the null with the X perturbation applied
/// to both groups.
pub fn run_power_study(config: &ScenarioConfig) -> Result<Vec<PowerRow>> {
    config.validate()?;
    if config.cells.is_empty() {
        return Err(Error::Config("power study needs at least one cell".into()));
    }
    let mut rows = Vec::with_capacity(config.cells.len());
    for cell in &config.cells {
        // null calibration: same perturbation on both groups
        let null_stats: Vec<(f64, f64, f64)> = (0..config.null_reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng_x = stream_rng(config.seed, rep, 2);
                let mut rng_y = stream_rng(config.seed, rep, 3);
                let mut x = generate_group(config, &mut rng_x, config.n_x);
                let mut y = generate_group(config, &mut rng_y, config.n_y);
                apply_perturbation(&mut x, cell.theta_x, cell.u_x);
                apply_perturbation(&mut y, cell.theta_x, cell.u_x);
                let s = baseline_statistics(&x, &y).expect("baseline statistics");
                (s.t1, s.t2, s.t3)
            })
            .collect();
        let mut t1s: Vec<f64> = null_stats.iter().map(|s| s.0).collect();
        let mut t2s: Vec<f64> = null_stats.iter().map(|s| s.1).collect();
        let mut t3s: Vec<f64> = null_stats.iter().map(|s| s.2).collect();
        t1s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        t2s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        t3s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let band = |v: &[f64]| {
            (
                quantile(v, config.alpha / 2.0),
                quantile(v, 1.0 - config.alpha / 2.0),
            )
        };
        let (b1, b2, b3) = (band(&t1s), band(&t2s), band(&t3s));
        let outside = |s: f64, (lo, hi): (f64, f64)| s < lo || s > hi;

        let hits: Vec<(bool, bool, bool, bool)> = (0..config.replicates)
            .into_par_iter()
            .map(|rep| {
                let (mut x, mut y) = generate(config, rep);
                apply_perturbation(&mut x, cell.theta_x, cell.u_x);
                apply_perturbation(&mut y, cell.theta_y, cell.u_y);
                let t_reject = residual_spike_test(
                    &x,
                    &y,
                    config.alpha,
                    Variant::BothFiltered,
                    false,
                )
                .map(|r| r.reject)
                .unwrap_or(false);
                let s = baseline_statistics(&x, &y).expect("baseline statistics");
                (
                    t_reject,
                    outside(s.t1, b1),
                    outside(s.t2, b2),
                    outside(s.t3, b3),
                )
            })
            .collect();
        let reps = hits.len() as f64;
        let rate = |f: &dyn Fn(&(bool, bool, bool, bool)) -> bool| {
            hits.iter().filter(|h| f(h)).count() as f64 / reps
        };
        rows.push(PowerRow {
            theta_x: cell.theta_x,
            theta_y: cell.theta_y,
            u_x: cell.u_x,
            u_y: cell.u_y,
            rate_t: rate(&|h| h.0),
            rate_t1: rate(&|h| h.1),
            rate_t2: rate(&|h| h.2),
            rate_t3: rate(&|h| h.3),
            replicates: hits.len(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn base_config(family: Family, m: usize, n: usize) -> ScenarioConfig {
        ScenarioConfig {
            family,
            m,
            n_x: n,
            n_y: n,
            rho: 0.0,
            arma_ar: default_arma_ar(),
            arma_ma: default_arma_ma(),
            theta_x: 5000.0,
            theta_y: 5000.0,
            u_x: 0,
            u_y: 0,
            replicates: 8,
            seed: 11,
            alpha: 0.05,
            null_reps: 20,
            cells: vec![],
        }
    }

    fn lag1_autocorr(data: &Array2<f64>) -> f64 {
        let (m, n) = (data.nrows(), data.ncols());
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..m {
            for j in 1..n {
                num += data[[i, j]] * data[[i, j - 1]];
            }
            for j in 0..n {
                den += data[[i, j]] * data[[i, j]];
            }
        }
        num / den
    }

    #[test]
    fn ar_zero_is_iid() {
        let config = base_config(Family::ArNormal, 50, 400);
        let (x, _) = generate(&config, 0);
        let r = lag1_autocorr(&x);
        assert!(r.abs() < 3.0 / (400.0f64 * 50.0).sqrt() * 3.0, "lag-1 corr {}", r);
    }

    #[test]
    fn ar_half_autocorrelation() {
        let mut config = base_config(Family::ArNormal, 50, 500);
        config.rho = 0.5;
        let (x, _) = generate(&config, 0);
        let r = lag1_autocorr(&x);
        assert!((r - 0.5).abs() < 0.05, "lag-1 corr {} should be near 0.5", r);
    }

    #[test]
    fn student_heavy_tails() {
        let config = base_config(Family::StudentT8, 40, 500);
        let (x, _) = generate(&config, 0);
        // kurtosis of t_8 entries is 3 + 6/(8-4) = 4.5
        let n = x.len() as f64;
        let m2 = x.iter().map(|v| v * v).sum::<f64>() / n;
        let m4 = x.iter().map(|v| v.powi(4)).sum::<f64>() / n;
        let kurt = m4 / (m2 * m2);
        assert!(kurt > 3.3, "kurtosis {} should exceed the normal value", kurt);
    }

    #[test]
    fn arma_trace_standardized() {
        let config = base_config(Family::Arma, 30, 100);
        let (x, _) = generate(&config, 0);
        let trace: f64 = x.iter().map(|v| v * v).sum::<f64>() / 100.0;
        assert_abs_diff_eq!(trace, 30.0, epsilon = 1e-6);
    }

    #[test]
    fn generation_deterministic() {
        let config = base_config(Family::ArNormal, 20, 30);
        let (x1, y1) = generate(&config, 3);
        let (x2, y2) = generate(&config, 3);
        assert_eq!(x1, x2);
        assert_eq!(y1, y2);
        // different replicates differ
        let (x3, _) = generate(&config, 4);
        assert_ne!(x1, x3);
    }

    #[test]
    fn perturbation_scales_row() {
        let config = base_config(Family::ArNormal, 10, 2000);
        let (mut x, _) = generate(&config, 0);
        let before: f64 = x.row(3).iter().map(|v| v * v).sum();
        apply_perturbation(&mut x, 9.0, 3);
        let after: f64 = x.row(3).iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(after / before, 9.0, epsilon = 1e-10);
    }

    #[test]
    fn null_study_requires_null() {
        let mut config = base_config(Family::ArNormal, 30, 60);
        config.theta_y = 10.0;
        assert!(matches!(run_null_study(&config), Err(Error::NotNull)));
    }

    #[test]
    fn null_study_small_smoke() {
        let mut config = base_config(Family::ArNormal, 60, 120);
        config.replicates = 12;
        let summaries = run_null_study(&config).unwrap();
        assert_eq!(summaries.len(), 2);
        let max = &summaries[0];
        assert_eq!(max.stat_name, "lambda_max");
        assert!(max.empirical_mean > 1.0);
        assert!((max.empirical_mean - max.theory_mean).abs() < 0.5);
        let min = &summaries[1];
        assert!(min.empirical_mean < 1.0 && min.empirical_mean > 0.0);
    }

    #[test]
    fn power_study_level_near_alpha() {
        let mut config = base_config(Family::ArNormal, 50, 100);
        config.replicates = 40;
        config.null_reps = 60;
        config.cells = vec![PowerCell {
            theta_x: 50.0,
            theta_y: 50.0,
            u_x: 0,
            u_y: 0,
        }];
        let rows = run_power_study(&config).unwrap();
        assert_eq!(rows.len(), 1);
        // identical populations: all rates should be near the level
        assert!(rows[0].rate_t <= 0.2, "T level {}", rows[0].rate_t);
        assert!(rows[0].rate_t2 <= 0.25);
        assert!(rows[0].rate_t3 <= 0.25);
    }

    #[test]
    fn toml_parsing_and_defaults() {
        let text = r#"
            family = "ar_normal"
            m = 300
            n_x = 300
            n_y = 300
        "#;
        let config = ScenarioConfig::from_toml_str(text).unwrap();
        assert_eq!(config.family, Family::ArNormal);
        assert_eq!(config.replicates, 200);
        assert_abs_diff_eq!(config.theta_x, 5000.0, epsilon = 0.0);
        assert_eq!(config.arma_ar, vec![0.6, 0.2]);
        // invalid configs are rejected
        assert!(ScenarioConfig::from_toml_str("").is_err());
        assert!(ScenarioConfig::from_toml_str(
            "family = \"arma\"\nm = 0\nn_x = 1\nn_y = 1"
        )
        .is_err());
        let bad_rho = r#"
            family = "ar_normal"
            m = 10
            n_x = 10
            n_y = 10
            rho = 1.5
        "#;
        assert!(ScenarioConfig::from_toml_str(bad_rho).is_err());
    }
}
