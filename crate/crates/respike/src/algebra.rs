//! Exact finite-m eigenvalue and eigenvector identities for rank-one
//! multiplicative perturbations: the secular equation, angle formulas, and the
//! closed-form residual-spike eigenvalues.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::spectra::EigenDecomposition;

/// Rank-one multiplicative perturbation P = I + (theta - 1) u u^t.
#[derive(Debug, Clone)]
pub struct PerturbationSpec {
    pub theta: f64,
    pub u: Array1<f64>,
}

impl PerturbationSpec {
    pub fn new(theta: f64, u: Array1<f64>) -> Result<Self> {
        let norm = u.dot(&u).sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotUnit(norm));
        }
        Ok(PerturbationSpec { theta, u })
    }

    /// Canonical direction e_{index}.
    pub fn canonical(theta: f64, dim: usize, index: usize) -> Self {
        let mut u = Array1::zeros(dim);
        u[index] = 1.0;
        PerturbationSpec { theta, u }
    }
}

/// Weight of a pole below which the eigenvalue collapses onto the pole itself.
const ZERO_WEIGHT: f64 = 1e-14;

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    // f must be positive at lo and negative at hi
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
        if (hi - lo).abs() <= 1e-12 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// All eigenvalues of P^{1/2} W P^{1/2}, found as roots of the secular
/// equation sum_i lambda_i w_i / (x - lambda_i) = 1/(theta - 1) where
/// w_i = <u_{W,i}, u>^2. Returned descending; they match the dense
/// eigendecomposition exactly.
pub fn secular_eigenvalues(w: &EigenDecomposition, pert: &PerturbationSpec) -> Result<Vec<f64>> {
    let theta = pert.theta;
    if theta <= 1.0 {
        return Err(Error::NoRoot(theta));
    }
    let m = w.values.dim();
    let target = 1.0 / (theta - 1.0);

    // ascending pole list with weights
    let mut poles: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let lam = w.eigenvalues()[i];
            let wi = w.eigenvector(i).dot(&pert.u).powi(2);
            (lam, wi)
        })
        .collect();
    poles.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // merge numerically identical poles; combined weight keeps the secular
    // function well defined, the extra copies stay fixed eigenvalues
    let mut active: Vec<(f64, f64)> = Vec::new();
    let mut fixed: Vec<f64> = Vec::new();
    let scale = poles.last().map(|p| p.0.abs()).unwrap_or(1.0).max(1e-300);
    for (lam, wi) in poles {
        if let Some(last) = active.last_mut() {
            if (lam - last.0).abs() <= 1e-12 * scale {
                last.1 += wi;
                fixed.push(lam);
                continue;
            }
        }
        active.push((lam, wi));
    }
    // poles with (numerically) zero weight or zero eigenvalue contribute no
    // secular term; the pole itself remains an eigenvalue
    let mut live: Vec<(f64, f64)> = Vec::new();
    for (lam, wi) in active {
        if lam.abs() * wi <= ZERO_WEIGHT {
            fixed.push(lam);
        } else {
            live.push((lam, wi));
        }
    }

    let f = |x: f64| -> f64 {
        live.iter()
            .map(|&(lam, wi)| lam * wi / (x - lam))
            .sum::<f64>()
            - target
    };

    let mut roots: Vec<f64> = Vec::with_capacity(m);
    // one root in each open interval between consecutive live poles
    for k in 0..live.len().saturating_sub(1) {
        let (a, b) = (live[k].0, live[k + 1].0);
        let eps = 1e-14 * scale.max(b - a);
        let (lo, hi) = (a + eps, b - eps);
        if f(lo) <= 0.0 || f(hi) >= 0.0 {
            return Err(Error::RootBracketFailure(a, b));
        }
        roots.push(bisect(f, lo, hi));
    }
    // one root above the top pole
    if let Some(&(top, _)) = live.last() {
        let lo = top + 1e-14 * scale.max(1.0);
        let mut hi = top + (theta - 1.0) * live.iter().map(|p| p.0 * p.1).sum::<f64>() + scale + 1.0;
        while f(hi) > 0.0 {
            hi *= 2.0;
        }
        if f(lo) <= 0.0 {
            return Err(Error::RootBracketFailure(lo, hi));
        }
        roots.push(bisect(f, lo, hi));
    }
    roots.extend_from_slice(&fixed);
    roots.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(roots)
}

/// Squared angles of the perturbed eigenvector at the secular root `lambda_s`.
#[derive(Debug, Clone, Copy)]
pub struct AngleFormulas {
    /// <u~_s, u>^2 for the eigenvector of W P.
    pub tilde_sq: f64,
    /// <u^_s, u>^2 for the eigenvector of P^{1/2} W P^{1/2}.
    pub hat_sq: f64,
    /// Same angle computed through the derivative of the weighted
    /// T-transform; agrees with `hat_sq` up to roundoff.
    pub hat_sq_tprime: f64,
}

/// Evaluate the closed-form angle identities at a secular root.
pub fn angle_formulas(
    w: &EigenDecomposition,
    pert: &PerturbationSpec,
    lambda_s: f64,
) -> Result<AngleFormulas> {
    let theta = pert.theta;
    let m = w.values.dim();
    let mut sum_sq = 0.0; // sum lambda^2 w / (lambda_s - lambda)^2
    let mut tprime = 0.0; // derivative of weighted T-transform
    for i in 0..m {
        let lam = w.eigenvalues()[i];
        let wi = w.eigenvector(i).dot(&pert.u).powi(2);
        let d = lambda_s - lam;
        if d.abs() < 1e-12 && lam.abs() * wi > ZERO_WEIGHT {
            return Err(Error::PoleTooClose(d.abs()));
        }
        if d.abs() > 0.0 {
            sum_sq += lam * lam * wi / (d * d);
            tprime -= lam * wi / (d * d);
        }
    }
    let tilde_sq = 1.0 / ((theta - 1.0).powi(2) * sum_sq);
    let hat_sq = theta * tilde_sq / (1.0 + (theta - 1.0) * tilde_sq);
    let hat_sq_tprime = -theta / ((theta - 1.0).powi(2) * lambda_s * tprime);
    Ok(AngleFormulas {
        tilde_sq,
        hat_sq,
        hat_sq_tprime,
    })
}

/// The two non-unit eigenvalues of the filtered product, or a tagged
/// complex-pair state when the radicand goes negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResidualPair {
    Real { hi: f64, lo: f64 },
    ComplexPair { radicand: f64 },
}

impl ResidualPair {
    /// The larger eigenvalue, if the pair is real.
    pub fn hi(&self) -> Option<f64> {
        match self {
            ResidualPair::Real { hi, .. } => Some(*hi),
            ResidualPair::ComplexPair { .. } => None,
        }
    }

    /// The smaller eigenvalue, if the pair is real.
    pub fn lo(&self) -> Option<f64> {
        match self {
            ResidualPair::Real { lo, .. } => Some(*lo),
            ResidualPair::ComplexPair { .. } => None,
        }
    }
}

/// Non-unit eigenvalues of
/// D = (I + (theta-1) uX uX^t)^{-1/2} (I + (theta-1) uY uY^t) (I + (theta-1) uX uX^t)^{-1/2}
/// with alpha2 = <uX, uY>^2. The product hi * lo equals 1.
pub fn lemma_residual_eigs(theta: f64, alpha2: f64) -> ResidualPair {
    debug_assert!(theta > 0.0);
    debug_assert!((-1e-12..=1.0 + 1e-12).contains(&alpha2));
    let rad = -4.0 * theta * theta
        + (1.0 + theta * theta - (theta - 1.0).powi(2) * alpha2).powi(2);
    if rad < -1e-9 {
        return ResidualPair::ComplexPair { radicand: rad };
    }
    let s = rad.max(0.0).sqrt();
    let base = -1.0 + alpha2 - 2.0 * alpha2 * theta - theta * theta * (1.0 - alpha2);
    let l1 = -(base + s) / (2.0 * theta);
    let l2 = -(base - s) / (2.0 * theta);
    ResidualPair::Real {
        hi: l1.max(l2),
        lo: l1.min(l2),
    }
}

/// Non-unit eigenvalues of the two-spike version
/// D2 = (I + (thetaX-1) uX uX^t)^{-1/2} (I + (thetaY-1) uY uY^t) (I + (thetaX-1) uX uX^t)^{-1/2}.
/// The product hi * lo equals thetaY / thetaX; with thetaX = thetaY this
/// reduces to [`lemma_residual_eigs`].
pub fn lemma_residual_eigs_2theta(theta_x: f64, theta_y: f64, alpha2: f64) -> ResidualPair {
    debug_assert!(theta_x > 0.0 && theta_y > 0.0);
    // factored radicand in beta = 1 - alpha2: algebraically identical to the
    // raw quartic but free of cancellation near alpha2 = 1, theta_x = theta_y
    let beta = 1.0 - alpha2;
    let k = (theta_y - 1.0) * (theta_x - 1.0);
    let rad = (theta_x - theta_y).powi(2) + k * beta * (2.0 * (theta_x + theta_y) + k * beta);
    if rad < -1e-9 {
        return ResidualPair::ComplexPair { radicand: rad };
    }
    let s = rad.max(0.0).sqrt();
    let head = 1.0 + beta * (theta_y - 1.0);
    let tail = theta_y - (theta_y - 1.0) * beta;
    let l1 = 0.5 * (head + (tail + s) / theta_x);
    let l2 = 0.5 * (head + (tail - s) / theta_x);
    ResidualPair::Real {
        hi: l1.max(l2),
        lo: l1.min(l2),
    }
}
