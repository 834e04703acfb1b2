//! Monotone-residual-spike criterion: the modeled expectation mu_lambda of
//! the largest residual spike as a function of the population spike size,
//! and a monotonicity verdict over a theta grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::Spectrum;

/// The criterion curve: mu_lambda evaluated over a theta grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionCurve {
    pub thetas: Vec<f64>,
    pub mu: Vec<f64>,
    pub alpha2: Vec<f64>,
    /// True when the curve is (weakly) monotone increasing.
    pub verdict: bool,
    /// Theta above which the series-based angle estimator replaces the
    /// fixed-point one.
    pub regime_switch: f64,
}

/// Solve for the location theta_hat of the perturbed largest eigenvalue:
/// the unique root above the bulk of
/// `1/(theta-1) = mean_i lambda_i / (theta_hat - lambda_i)`.
pub fn theta_hat_solve(bulk: &Spectrum, theta: f64) -> Result<f64> {
    if theta <= 1.0 {
        return Err(Error::NoRoot(theta));
    }
    let target = 1.0 / (theta - 1.0);
    let top = bulk.max();
    if top <= 0.0 {
        return Err(Error::ZeroTrace);
    }
    let vals = bulk.values();
    let n = vals.len() as f64;
    let f = |t: f64| -> f64 { vals.iter().map(|&l| l / (t - l)).sum::<f64>() / n - target };
    let mut lo = top * (1.0 + 1e-14);
    if f(lo) <= 0.0 {
        // the mean transform cannot reach the target this close to the edge:
        // the root is pinned at the edge within tolerance
        return Err(Error::NoRoot(theta));
    }
    let mut hi = top + (theta - 1.0) * bulk.moment(1) + top + 1.0;
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Modeled expectation of the largest residual spike at population spike
/// size theta, with the squared double angle alpha2 = alpha_X^2 alpha_Y^2
/// from the fixed-point angle formula on each bulk.
pub fn criterion_mu(bulk_x: &Spectrum, bulk_y: &Spectrum, theta: f64) -> Result<f64> {
    let a2 = crate::spike::alpha2_fixed_point(bulk_x, theta)?
        * crate::spike::alpha2_fixed_point(bulk_y, theta)?;
    mu_from_alpha2(theta, a2)
}

/// Same curve with the cheap large-theta series for the angles; the angle
/// error is O(1/theta^2).
pub fn criterion_mu_largetheta(bulk_x: &Spectrum, bulk_y: &Spectrum, theta: f64) -> Result<f64> {
    let a2 = (crate::spike::alpha2_series(bulk_x, theta)
        * crate::spike::alpha2_series(bulk_y, theta))
    .min(1.0);
    mu_from_alpha2(theta, a2)
}

/// The plus branch of the residual-spike eigenvalue formula; identical to
/// the larger eigenvalue from the rank-one product lemma.
pub fn mu_from_alpha2(theta: f64, alpha2: f64) -> Result<f64> {
    // factored radicand: exactly nonnegative for alpha2 <= 1, and free of
    // the catastrophic cancellation of the raw quartic near alpha2 = 1
    let beta = 1.0 - alpha2;
    let rad = (theta - 1.0).powi(2) * beta * (4.0 * theta + (theta - 1.0).powi(2) * beta);
    if rad < -1e-9 {
        return Err(Error::ComplexBranch(theta));
    }
    Ok(1.0
        + beta * (theta - 1.0).powi(2) / (2.0 * theta)
        + rad.max(0.0).sqrt() / (2.0 * theta))
}

/// Detectability-threshold estimate for the population spike size: the
/// theta whose bias-corrected value sits at the bulk separation edge.
pub fn theta_detectability(bulk: &Spectrum) -> f64 {
    let m = bulk.dim() + 1;
    let mean = bulk.moment(1);
    let width = bulk.max() - bulk.min();
    let c_hat = (width / (4.0 * mean.max(1e-300))).powi(2);
    let edge = ((1.0 + c_hat.sqrt()).powi(2) * mean + 10.0 * (m as f64).powf(-2.0 / 3.0))
        .max(bulk.max() * (1.0 + 1e-9));
    // invert the bias correction at the edge location
    let t: f64 = bulk
        .values()
        .iter()
        .map(|&l| l / (edge * (1.0 + 1e-9) - l))
        .sum::<f64>()
        / bulk.dim() as f64;
    (1.0 + 1.0 / t).max(1.0 + 1e-6)
}

/// Default grid: 60 log-spaced points from 1.5 times the detectability
/// threshold up to 1e4 sqrt(m).
pub fn default_theta_grid(bulk_x: &Spectrum, bulk_y: &Spectrum) -> Vec<f64> {
    let m = (bulk_x.dim() + 1).max(bulk_y.dim() + 1) as f64;
    let lo = 1.5 * theta_detectability(bulk_x).max(theta_detectability(bulk_y));
    let hi = 1e4 * m.sqrt();
    let (llo, lhi) = (lo.ln(), hi.max(lo * 2.0).ln());
    (0..60)
        .map(|i| (llo + (lhi - llo) * i as f64 / 59.0).exp())
        .collect()
}

/// Evaluate the criterion over a grid (default grid when `thetas` is None)
/// and report whether the curve is weakly increasing. Points on the complex
/// branch are skipped and excluded from the verdict.
pub fn criterion_check(
    bulk_x: &Spectrum,
    bulk_y: &Spectrum,
    thetas: Option<&[f64]>,
) -> CriterionCurve {
    let grid: Vec<f64> = match thetas {
        Some(t) => t.to_vec(),
        None => default_theta_grid(bulk_x, bulk_y),
    };
    let m = (bulk_x.dim() + 1) as f64;
    let m2 = 0.5 * (bulk_x.moment(2) + bulk_y.moment(2));
    let regime_switch = 5.0 * m.sqrt() * m2;
    let mut thetas_out = Vec::new();
    let mut mu = Vec::new();
    let mut alpha2 = Vec::new();
    for &t in &grid {
        let a2 = if t < regime_switch {
            match (
                crate::spike::alpha2_fixed_point(bulk_x, t),
                crate::spike::alpha2_fixed_point(bulk_y, t),
            ) {
                (Ok(ax), Ok(ay)) => ax * ay,
                _ => continue,
            }
        } else {
            (crate::spike::alpha2_series(bulk_x, t) * crate::spike::alpha2_series(bulk_y, t))
                .min(1.0)
        };
        match mu_from_alpha2(t, a2) {
            Ok(v) => {
                thetas_out.push(t);
                mu.push(v);
                alpha2.push(a2);
            }
            Err(_) => continue,
        }
    }
    let verdict = mu.windows(2).all(|w| w[1] - w[0] >= -1e-9);
    CriterionCurve {
        thetas: thetas_out,
        mu,
        alpha2,
        verdict,
        regime_switch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{lemma_residual_eigs, ResidualPair};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn mp_bulk(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Spectrum {
        let mut z = ndarray::Array2::<f64>::zeros((m, n));
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let w = z.dot(&z.t()) / n as f64;
        let dec = crate::spectra::eig_sym(&w).unwrap();
        Spectrum::new(dec.eigenvalues()[1..].to_vec())
            .normalize_trace()
            .unwrap()
    }

    #[test]
    fn theta_hat_flat_bulk() {
        let bulk = Spectrum::new(vec![1.0; 99]);
        let th = theta_hat_solve(&bulk, 6.0).unwrap();
        assert_abs_diff_eq!(th, 6.0, epsilon = 1e-9);
    }

    #[test]
    fn theta_hat_wishart_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, n, theta) = (500, 1000, 5.0);
        let c = m as f64 / n as f64;
        let bulk = mp_bulk(&mut rng, m, n);
        let th = theta_hat_solve(&bulk, theta).unwrap();
        let limit = theta * (1.0 + c / (theta - 1.0));
        assert!(
            (th - limit).abs() < 5.0 / (m as f64).sqrt() * theta,
            "theta_hat {} vs {}",
            th,
            limit
        );
    }

    #[test]
    fn theta_hat_plugback_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let k = rng.gen_range(10..80);
            let vals: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..3.0)).collect();
            let bulk = Spectrum::new(vals).normalize_trace().unwrap();
            let theta = rng.gen_range(1.5..50.0);
            let th = theta_hat_solve(&bulk, theta).unwrap();
            let rhs: f64 = bulk
                .values()
                .iter()
                .map(|&l| l / (th - l))
                .sum::<f64>()
                / bulk.dim() as f64;
            assert!(
                (rhs - 1.0 / (theta - 1.0)).abs() < 1e-10,
                "residual {}",
                rhs - 1.0 / (theta - 1.0)
            );
        }
    }

    #[test]
    fn no_root_below_one() {
        let bulk = Spectrum::new(vec![1.0; 10]);
        assert!(matches!(
            theta_hat_solve(&bulk, 0.9),
            Err(Error::NoRoot(_))
        ));
    }

    #[test]
    fn mu_flat_bulks_is_one() {
        let bulk = Spectrum::new(vec![1.0; 99]);
        let mu = criterion_mu(&bulk, &bulk, 8.0).unwrap();
        assert_abs_diff_eq!(mu, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn mu_equals_lemma_hi_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let theta = rng.gen_range(1.2..200.0);
            let a2 = rng.gen_range(0.0..1.0);
            let mu = mu_from_alpha2(theta, a2).unwrap();
            match lemma_residual_eigs(theta, a2) {
                ResidualPair::Real { hi, .. } => {
                    assert_abs_diff_eq!(mu, hi, epsilon = 1e-10 * hi.max(1.0))
                }
                _ => panic!("real branch expected"),
            }
        }
    }

    #[test]
    fn largetheta_matches_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let bulk_x = mp_bulk(&mut rng, 300, 300);
        let bulk_y = mp_bulk(&mut rng, 300, 300);
        let theta = 100.0 * (300.0f64).sqrt();
        let a = criterion_mu(&bulk_x, &bulk_y, theta).unwrap();
        let b = criterion_mu_largetheta(&bulk_x, &bulk_y, theta).unwrap();
        assert!((a - b).abs() < 1e-3, "mu {} vs series {}", a, b);
    }

    #[test]
    fn largetheta_limit_is_lambda_plus() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let bulk_x = mp_bulk(&mut rng, 400, 400);
        let bulk_y = mp_bulk(&mut rng, 400, 400);
        let m = 400.0f64;
        let mu = criterion_mu_largetheta(&bulk_x, &bulk_y, 1e8).unwrap();
        let law = crate::nulllaw::null_law_general(
            &crate::spectra::MomentSet::from_spectrum(&bulk_x, crate::spectra::Group::X),
            &crate::spectra::MomentSet::from_spectrum(&bulk_y, crate::spectra::Group::Y),
            400,
        )
        .unwrap();
        assert!(
            (mu - law.lambda_plus).abs() < 2.0 / m.sqrt(),
            "mu {} vs lambda_plus {}",
            mu,
            law.lambda_plus
        );
    }

    #[test]
    fn mu_at_least_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let bulk_x = mp_bulk(&mut rng, 200, 300);
        let bulk_y = mp_bulk(&mut rng, 200, 250);
        for &t in &default_theta_grid(&bulk_x, &bulk_y) {
            if let Ok(mu) = criterion_mu(&bulk_x, &bulk_y, t) {
                assert!(mu >= 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn flat_bulks_verdict_true() {
        let bulk = Spectrum::new(vec![1.0; 49]);
        let grid: Vec<f64> = (0..20).map(|i| 2.0 + i as f64).collect();
        let curve = criterion_check(&bulk, &bulk, Some(&grid));
        assert!(curve.verdict);
        for &v in &curve.mu {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn mp_bulks_verdict_true() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let bulk_x = mp_bulk(&mut rng, 300, 900);
        let bulk_y = mp_bulk(&mut rng, 300, 600);
        let curve = criterion_check(&bulk_x, &bulk_y, None);
        assert!(curve.verdict);
        assert!(curve.thetas.len() > 50);
    }

    #[test]
    fn adversarial_bulk_fails_criterion() {
        // two-atom bulk found by grid search: the modeled residual spike dips
        let mut vals = vec![5.65322465];
        vals.extend(std::iter::repeat(0.43714858).take(99));
        let bulk = Spectrum::new(vals).normalize_trace().unwrap();
        let curve = criterion_check(&bulk, &bulk, None);
        assert!(!curve.verdict, "expected a monotonicity violation");
    }
}
