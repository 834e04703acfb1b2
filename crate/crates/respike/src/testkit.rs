//! End-to-end two-sample residual-spike test and the classical baseline
//! statistics with generalized determinant/inverse and empirical null
//! quantiles.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{lemma_residual_eigs_2theta, ResidualPair};
use crate::criterion::criterion_check;
use crate::error::{Error, Result};
use crate::nulllaw::{null_law_general, pvalues, NullLaw, ZoneVariant};
use crate::spectra::{eig_sym, Group};
use crate::spike::{estimate_spike, filtered_matrix, SpikeEstimate, SpikeOptions};

/// Variant of the residual product under test.
pub type Variant = ZoneVariant;

/// Ancillary information recorded with a test decision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub detectable_x: bool,
    pub detectable_y: bool,
    /// Whether the monotone-residual-spike criterion holds on the two bulks.
    pub criterion_ok: bool,
    /// True when the samples were swapped to keep n_X >= n_Y.
    pub swapped: bool,
    /// True when the two extremes collapse (identical inputs).
    pub degenerate: bool,
    pub extra_spikes_x: usize,
    pub extra_spikes_y: usize,
    pub matrix_variant: Variant,
}

/// Outcome of the residual-spike test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub schema: String,
    pub lambda_max_obs: f64,
    pub lambda_min_obs: f64,
    pub p_max: f64,
    pub p_min: f64,
    pub reject: bool,
    pub alpha_level: f64,
    pub law: NullLaw,
    pub diagnostics: Diagnostics,
}

impl TestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization")
    }
}

/// Classical baseline statistics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BaselineStats {
    /// Log-ratio statistic n_X log|w_X I + w_Y B|.
    pub t1: f64,
    /// Generalized log-determinant of B.
    pub t2: f64,
    /// Trace of B.
    pub t3: f64,
}

/// Baseline statistics with empirical two-sided null quantiles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineReport {
    pub stats: BaselineStats,
    /// Per-statistic (lower, upper) quantiles at levels alpha/2 and 1-alpha/2.
    pub quantiles: [(f64, f64); 3],
    pub reject_t1: bool,
    pub reject_t2: bool,
    pub reject_t3: bool,
    pub null_reps: usize,
    pub alpha_level: f64,
}

/// Subtract per-variable (row) means.
pub fn center_rows(data: &Array2<f64>) -> Array2<f64> {
    let mut out = data.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let mean = row.sum() / row.len() as f64;
        row.mapv_inplace(|v| v - mean);
    }
    out
}

/// Uncentered sample covariance X X^t / n with rows as variables.
pub fn sample_covariance(data: &Array2<f64>) -> Array2<f64> {
    data.dot(&data.t()) / data.ncols() as f64
}

fn estimate(cov: &Array2<f64>, n: usize) -> Result<SpikeEstimate> {
    estimate_spike(
        cov,
        &SpikeOptions {
            n: Some(n),
            ..Default::default()
        },
    )
}

/// Run the two-sample residual-spike test on raw data matrices with rows as
/// variables and columns as observations.
pub fn residual_spike_test(
    x: &Array2<f64>,
    y: &Array2<f64>,
    alpha: f64,
    variant: Variant,
    center: bool,
) -> Result<TestReport> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "variable counts differ: {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let m = x.nrows();
    if m < 3 {
        return Err(Error::DimensionMismatch(format!(
            "need at least 3 variables, got {}",
            m
        )));
    }
    // the inversion goes on the sample with more observations
    let swapped = x.ncols() < y.ncols();
    let (dx, dy) = if swapped { (y, x) } else { (x, y) };
    let (dx, dy) = if center {
        (center_rows(dx), center_rows(dy))
    } else {
        (dx.clone(), dy.clone())
    };
    let cov_x = sample_covariance(&dx);
    let cov_y = sample_covariance(&dy);
    let est_x = estimate(&cov_x, dx.ncols())?;
    let est_y = estimate(&cov_y, dy.ncols())?;
    if !est_x.detectable || !est_y.detectable {
        return Err(Error::NotDetectable);
    }
    let (lambda_max_obs, lambda_min_obs) = match variant {
        Variant::BothFiltered => {
            // the doubly filtered product is a rank-two update of the
            // identity; its two non-unit eigenvalues are in closed form
            let raw_a2 = est_x.u_hat.dot(&est_y.u_hat).powi(2);
            // squared cosine: snap values within roundoff of 1 so identical
            // inputs give an exactly unit residual product
            let alpha2 = if raw_a2 > 1.0 - 1e-10 { 1.0 } else { raw_a2 };
            match lemma_residual_eigs_2theta(est_x.theta_unbiased, est_y.theta_unbiased, alpha2)
            {
                ResidualPair::Real { hi, lo } => (hi, lo),
                ResidualPair::ComplexPair { radicand } => {
                    return Err(Error::ComplexBranch(radicand))
                }
            }
        }
        Variant::FilteredRaw => {
            let f = filtered_matrix(&est_x)?;
            // rescale the raw Y estimate the same way its bulk was scaled
            let bulk_sum_raw: f64 = {
                let dec = eig_sym(&cov_y)?;
                dec.eigenvalues()[1..].iter().sum()
            };
            let scale = (m as f64 - 1.0) / bulk_sum_raw;
            let product = f.inv_sqrt_apply(&(&cov_y * scale))?;
            let dec = eig_sym(&product)?;
            (
                dec.eigenvalues()[0],
                *dec.eigenvalues().last().expect("nonempty spectrum"),
            )
        }
    };
    let degenerate = lambda_max_obs - lambda_min_obs < 1e-9;
    let law = null_law_general(
        &est_x.bulk_moments(Group::X),
        &est_y.bulk_moments(Group::Y),
        m,
    )?;
    let (p_max, p_min) = pvalues(&law, lambda_max_obs, lambda_min_obs);
    let reject = p_max < alpha / 2.0 || p_min < alpha / 2.0;
    let criterion_ok = criterion_check(&est_x.bulk, &est_y.bulk, None).verdict;
    Ok(TestReport {
        schema: "1".into(),
        lambda_max_obs,
        lambda_min_obs,
        p_max,
        p_min,
        reject,
        alpha_level: alpha,
        law,
        diagnostics: Diagnostics {
            detectable_x: est_x.detectable,
            detectable_y: est_y.detectable,
            criterion_ok,
            swapped,
            degenerate,
            extra_spikes_x: est_x.extra_spikes,
            extra_spikes_y: est_y.extra_spikes,
            matrix_variant: variant,
        },
    })
}

const RANK_TOL: f64 = 1e-12;

/// Degeneracy tolerance for the log-determinant statistic. When both groups
/// are rank deficient (n_X + n_Y < 2m), the product matrix has genuinely
/// tiny eigenvalues from near-orthogonal principal angles; counting their
/// logs drowns the statistic in noise, so eigenvalues below this fraction of
/// the largest are treated as null.
const LOGDET_RANK_TOL: f64 = 1e-3;

/// Log of the product of the non-null eigenvalues.
pub fn gen_logdet(a: &Array2<f64>) -> Result<f64> {
    let dec = eig_sym(a)?;
    let top = dec.eigenvalues().first().copied().unwrap_or(0.0);
    let tol = RANK_TOL * top.abs();
    let mut total = 0.0;
    let mut any = false;
    for &l in dec.eigenvalues() {
        if l > tol {
            total += l.ln();
            any = true;
        }
    }
    if !any {
        return Err(Error::AllZero);
    }
    Ok(total)
}

/// Generalized inverse square root: pseudo-inverse restricted to the
/// non-null eigenspace.
pub fn gen_inv_sqrt(a: &Array2<f64>) -> Result<Array2<f64>> {
    let dec = eig_sym(a)?;
    let m = a.nrows();
    let top = dec.eigenvalues().first().copied().unwrap_or(0.0);
    let tol = RANK_TOL * top.abs();
    let mut any = false;
    let mut scaled = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        let l = dec.eigenvalues()[i];
        if l > tol {
            any = true;
            let f = l.powf(-0.5);
            let v = dec.eigenvector(i);
            for r in 0..m {
                scaled[[r, i]] = v[r] * f;
            }
        }
    }
    if !any {
        return Err(Error::AllZero);
    }
    Ok(scaled.dot(&dec.vectors.t()))
}

/// The three classical statistics from raw data matrices.
pub fn baseline_statistics(x: &Array2<f64>, y: &Array2<f64>) -> Result<BaselineStats> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "variable counts differ: {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let (nx, ny) = (x.ncols() as f64, y.ncols() as f64);
    let cov_x = sample_covariance(x);
    let cov_y = sample_covariance(y);
    let g = gen_inv_sqrt(&cov_x)?;
    let b = g.dot(&cov_y).dot(&g);
    let dec = eig_sym(&b)?;
    let top = dec.eigenvalues().first().copied().unwrap_or(0.0);
    let tol = LOGDET_RANK_TOL * top.abs();
    let (wx, wy) = (nx / (nx + ny), ny / (nx + ny));
    let mut t1 = 0.0;
    let mut t2 = 0.0;
    let mut t3 = 0.0;
    for &l in dec.eigenvalues() {
        t1 += (wx + wy * l).ln();
        if l > tol {
            t2 += l.ln();
        }
        t3 += l;
    }
    Ok(BaselineStats {
        t1: nx * t1,
        t2,
        t3,
    })
}

/// Empirical p-quantile with linear interpolation on sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Apply the square root of a rank-one spike perturbation to data rows.
pub fn apply_spike_sqrt(data: &mut Array2<f64>, theta: f64, u: &Array1<f64>) {
    if (theta - 1.0).abs() < 1e-15 {
        return;
    }
    let s = theta.sqrt() - 1.0;
    let proj = u.dot(data); // u^t Z, length n
    for i in 0..data.nrows() {
        let ui = u[i];
        if ui == 0.0 {
            continue;
        }
        for j in 0..data.ncols() {
            data[[i, j]] += s * ui * proj[j];
        }
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Array2<f64> {
    let mut z = Array2::<f64>::zeros((m, n));
    for v in z.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    z
}

/// Baseline statistics plus empirical null quantiles simulated under the
/// null hypothesis with the pooled spike estimate applied to both groups.
pub fn baselines(
    x: &Array2<f64>,
    y: &Array2<f64>,
    null_reps: usize,
    seed: u64,
    alpha: f64,
) -> Result<BaselineReport> {
    let stats = baseline_statistics(x, y)?;
    let m = x.nrows();
    let (nx, ny) = (x.ncols(), y.ncols());
    // pooled spike: the common perturbation assumed under the null
    let pooled = {
        let mut z = Array2::<f64>::zeros((m, nx + ny));
        z.slice_mut(ndarray::s![.., ..nx]).assign(x);
        z.slice_mut(ndarray::s![.., nx..]).assign(y);
        z
    };
    let est = estimate(&sample_covariance(&pooled), nx + ny)?;
    let (theta_p, u_p) = if est.detectable {
        (est.theta_unbiased, est.u_hat.clone())
    } else {
        (1.0, est.u_hat.clone())
    };
    let draws: Vec<BaselineStats> = (0..null_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng_x = ChaCha8Rng::seed_from_u64(seed);
            rng_x.set_stream(rep as u64 * 4);
            let mut rng_y = ChaCha8Rng::seed_from_u64(seed);
            rng_y.set_stream(rep as u64 * 4 + 1);
            let mut zx = gaussian_matrix(&mut rng_x, m, nx);
            let mut zy = gaussian_matrix(&mut rng_y, m, ny);
            apply_spike_sqrt(&mut zx, theta_p, &u_p);
            apply_spike_sqrt(&mut zy, theta_p, &u_p);
            baseline_statistics(&zx, &zy).expect("null simulation statistics")
        })
        .collect();
    let mut sorted = [
        draws.iter().map(|d| d.t1).collect::<Vec<f64>>(),
        draws.iter().map(|d| d.t2).collect::<Vec<f64>>(),
        draws.iter().map(|d| d.t3).collect::<Vec<f64>>(),
    ];
    for s in sorted.iter_mut() {
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    let q = |v: &[f64]| (quantile(v, alpha / 2.0), quantile(v, 1.0 - alpha / 2.0));
    let quantiles = [q(&sorted[0]), q(&sorted[1]), q(&sorted[2])];
    let outside = |s: f64, (lo, hi): (f64, f64)| s < lo || s > hi;
    Ok(BaselineReport {
        stats,
        quantiles,
        reject_t1: outside(stats.t1, quantiles[0]),
        reject_t2: outside(stats.t2, quantiles[1]),
        reject_t3: outside(stats.t3, quantiles[2]),
        null_reps,
        alpha_level: alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spiked_data(rng: &mut ChaCha8Rng, m: usize, n: usize, theta: f64, u_index: usize) -> Array2<f64> {
        let mut z = gaussian_matrix(rng, m, n);
        let mut u = Array1::zeros(m);
        u[u_index] = 1.0;
        apply_spike_sqrt(&mut z, theta, &u);
        z
    }

    #[test]
    fn identical_data_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = spiked_data(&mut rng, 80, 160, 20.0, 0);
        let report =
            residual_spike_test(&x, &x, 0.05, Variant::BothFiltered, true).unwrap();
        assert!(report.diagnostics.degenerate);
        assert_abs_diff_eq!(report.lambda_max_obs, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(report.lambda_min_obs, 1.0, epsilon = 1e-9);
        assert!(!report.reject, "identical data must not reject");
    }

    #[test]
    fn both_filtered_product_has_two_nonunit_eigs() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let x = spiked_data(&mut rng, 60, 120, 30.0, 0);
        let y = spiked_data(&mut rng, 60, 120, 30.0, 0);
        let cx = sample_covariance(&center_rows(&x));
        let cy = sample_covariance(&center_rows(&y));
        let ex = estimate(&cx, 120).unwrap();
        let ey = estimate(&cy, 120).unwrap();
        let fx = filtered_matrix(&ex).unwrap();
        let fy = filtered_matrix(&ey).unwrap();
        let product = fx.inv_sqrt_apply(&fy.materialize()).unwrap();
        let dec = eig_sym(&product).unwrap();
        let non_unit = dec
            .eigenvalues()
            .iter()
            .filter(|&&l| (l - 1.0).abs() > 1e-8)
            .count();
        assert_eq!(non_unit, 2);
        // and the closed form matches the dense extremes
        let report = residual_spike_test(&x, &y, 0.05, Variant::BothFiltered, true).unwrap();
        assert_abs_diff_eq!(report.lambda_max_obs, dec.eigenvalues()[0], epsilon = 1e-8);
        assert_abs_diff_eq!(
            report.lambda_min_obs,
            *dec.eigenvalues().last().unwrap(),
            epsilon = 1e-8
        );
    }

    #[test]
    fn swap_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let x = spiked_data(&mut rng, 50, 100, 25.0, 0);
        let y = spiked_data(&mut rng, 50, 100, 25.0, 0);
        let a = residual_spike_test(&x, &y, 0.05, Variant::BothFiltered, false).unwrap();
        let b = residual_spike_test(&y, &x, 0.05, Variant::BothFiltered, false).unwrap();
        // with equal sample sizes, swapping inverts the product's spectrum
        assert_abs_diff_eq!(a.lambda_max_obs, 1.0 / b.lambda_min_obs, epsilon = 1e-6);
        assert_abs_diff_eq!(a.lambda_min_obs, 1.0 / b.lambda_max_obs, epsilon = 1e-6);
    }

    #[test]
    fn swapped_flag_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let x = spiked_data(&mut rng, 40, 60, 25.0, 0);
        let y = spiked_data(&mut rng, 40, 120, 25.0, 0);
        let report = residual_spike_test(&x, &y, 0.05, Variant::BothFiltered, true).unwrap();
        assert!(report.diagnostics.swapped);
    }

    #[test]
    fn filtered_raw_variant_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let x = spiked_data(&mut rng, 60, 240, 30.0, 0);
        let y = spiked_data(&mut rng, 60, 120, 30.0, 0);
        let report = residual_spike_test(&x, &y, 0.05, Variant::FilteredRaw, true).unwrap();
        assert!(report.lambda_max_obs > report.lambda_min_obs);
        assert!(report.lambda_min_obs > 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let x = Array2::<f64>::zeros((10, 20));
        let y = Array2::<f64>::zeros((11, 20));
        assert!(matches!(
            residual_spike_test(&x, &y, 0.05, Variant::BothFiltered, true),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn gen_logdet_cases() {
        assert_abs_diff_eq!(gen_logdet(&Array2::eye(5)).unwrap(), 0.0, epsilon = 1e-12);
        let a = ndarray::arr2(&[[2.0, 0.0], [0.0, 0.0]]);
        assert_abs_diff_eq!(gen_logdet(&a).unwrap(), 2.0f64.ln(), epsilon = 1e-12);
        let z = Array2::<f64>::zeros((3, 3));
        assert!(matches!(gen_logdet(&z), Err(Error::AllZero)));
    }

    #[test]
    fn gen_logdet_rank_deficient_wishart() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let (m, n) = (12, 5);
        let z = gaussian_matrix(&mut rng, m, n);
        let w = sample_covariance(&z);
        let dec = eig_sym(&w).unwrap();
        let oracle: f64 = dec.eigenvalues()[..n].iter().map(|l| l.ln()).sum();
        assert_abs_diff_eq!(gen_logdet(&w).unwrap(), oracle, epsilon = 1e-9);
    }

    #[test]
    fn gen_inv_sqrt_full_rank() {
        let a = ndarray::arr2(&[[4.0, 0.0], [0.0, 9.0]]);
        let g = gen_inv_sqrt(&a).unwrap();
        assert_abs_diff_eq!(g[[0, 0]], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g[[1, 1]], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[[0, 1]], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn baseline_identity_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let x = spiked_data(&mut rng, 20, 60, 10.0, 0);
        let s = baseline_statistics(&x, &x).unwrap();
        assert_abs_diff_eq!(s.t2, 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(s.t3, 20.0, epsilon = 1e-7);
    }

    #[test]
    fn baseline_rank_truncation() {
        // n < m: B acts on the n-dimensional column space
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        let x = spiked_data(&mut rng, 30, 10, 5.0, 0);
        let s = baseline_statistics(&x, &x).unwrap();
        assert_abs_diff_eq!(s.t2, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s.t3, 10.0, epsilon = 1e-6);
    }

    #[test]
    fn baselines_report_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let x = spiked_data(&mut rng, 25, 50, 15.0, 0);
        let y = spiked_data(&mut rng, 25, 50, 15.0, 0);
        let a = baselines(&x, &y, 60, 9, 0.05).unwrap();
        let b = baselines(&x, &y, 60, 9, 0.05).unwrap();
        assert_eq!(a.quantiles[0], b.quantiles[0]);
        assert_eq!(a.quantiles[2], b.quantiles[2]);
        assert!(a.quantiles[0].0 <= a.quantiles[0].1);
    }

    #[test]
    fn quantile_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_abs_diff_eq!(quantile(&v, 0.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile(&v, 1.0), 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile(&v, 0.5), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile(&v, 0.625), 3.5, epsilon = 1e-12);
    }

    #[test]
    fn report_json_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let x = spiked_data(&mut rng, 40, 80, 20.0, 0);
        let y = spiked_data(&mut rng, 40, 80, 20.0, 1);
        let report = residual_spike_test(&x, &y, 0.05, Variant::BothFiltered, true).unwrap();
        let json = report.to_json();
        let parsed: TestReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.reject, report.reject);
        assert_abs_diff_eq!(parsed.p_max, report.p_max, epsilon = 0.0);
        assert_eq!(parsed.schema, "1");
    }

    #[test]
    fn apply_spike_variance_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let mut z = gaussian_matrix(&mut rng, 4, 10000);
        let mut u = Array1::zeros(4);
        u[2] = 1.0;
        apply_spike_sqrt(&mut z, 9.0, &u);
        let var: f64 = z.row(2).iter().map(|v| v * v).sum::<f64>() / 10000.0;
        assert!((var - 9.0).abs() < 0.5, "row variance {} should be near 9", var);
    }
}
