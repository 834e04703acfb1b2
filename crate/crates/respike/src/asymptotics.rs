//! Distributional approximations: covariances of invariant-vector
//! statistics and the joint Gaussian laws of the bias-corrected spike and
//! the squared angles in the three spike-size regimes, with closed-form
//! Wishart specializations.

use ndarray::{arr2, Array2};

use crate::algebra::PerturbationSpec;
use crate::criterion::theta_hat_solve;
use crate::error::{Error, Result};
use crate::spectra::{EigenDecomposition, Spectrum};

/// A finite-dimensional Gaussian approximation. The covariance already
/// carries the 1/m scaling, so it approximates the covariance of the plain
/// (unscaled) statistics.
#[derive(Debug, Clone)]
pub struct GaussianApprox {
    pub mean: Vec<f64>,
    pub cov: Array2<f64>,
    pub labels: Vec<String>,
}

impl GaussianApprox {
    /// Smallest eigenvalue of the covariance; near-zero negative values are
    /// roundoff, anything clearly negative indicates a transcription bug.
    pub fn min_cov_eig(&self) -> f64 {
        crate::spectra::eig_sym(&self.cov)
            .map(|d| d.eigenvalues().last().copied().unwrap_or(0.0))
            .unwrap_or(f64::NAN)
    }
}

/// M-functionals of one spectrum at a reference point rho, bundled for the
/// small-theta covariance formulas.
#[derive(Debug, Clone, Copy)]
pub struct SpectralFunctionals {
    pub rho: f64,
    pub m11: f64,
    pub m12: f64,
    pub m13: f64,
    pub m22: f64,
    pub m23: f64,
    pub m24: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl SpectralFunctionals {
    pub fn from_spectrum(spec: &Spectrum, rho: f64) -> Result<Self> {
        Ok(SpectralFunctionals {
            rho,
            m11: spec.m_functional(rho, 1, 1)?,
            m12: spec.m_functional(rho, 1, 2)?,
            m13: spec.m_functional(rho, 1, 3)?,
            m22: spec.m_functional(rho, 2, 2)?,
            m23: spec.m_functional(rho, 2, 3)?,
            m24: spec.m_functional(rho, 2, 4)?,
            m2: spec.moment(2),
            m3: spec.moment(3),
            m4: spec.moment(4),
        })
    }

    /// Functionals at the deterministic-equivalent location of the top
    /// perturbed eigenvalue for spike size theta.
    pub fn at_theta(spec: &Spectrum, theta: f64) -> Result<Self> {
        let rho = rho_solve(spec, theta)?;
        Self::from_spectrum(spec, rho)
    }
}

/// Deterministic-equivalent location of the perturbed top eigenvalue:
/// the root above the bulk of `mean lambda/(rho - lambda) = 1/(theta-1)`.
pub fn rho_solve(spec: &Spectrum, theta: f64) -> Result<f64> {
    theta_hat_solve(spec, theta)
}

/// Covariance of a pair of invariant-vector statistics
/// `sqrt(m) (sum_i lambda^s1/(rho-lambda)^s2 u_{p,i}^2 - M_{s1,s2})` at
/// indices s = (s1, s2) and r = (r1, r2); the factor 2 applies when both
/// statistics use the same invariant vector.
pub fn invariant_vector_cov(
    spec: &Spectrum,
    rho: f64,
    s: (u32, u32),
    r: (u32, u32),
    same_index: bool,
) -> Result<Array2<f64>> {
    let pref = if same_index { 2.0 } else { 1.0 };
    let ms = spec.m_functional(rho, s.0, s.1)?;
    let mr = spec.m_functional(rho, r.0, r.1)?;
    let m2s = spec.m_functional(rho, 2 * s.0, 2 * s.1)?;
    let m2r = spec.m_functional(rho, 2 * r.0, 2 * r.1)?;
    let msr = spec.m_functional(rho, s.0 + r.0, s.1 + r.1)?;
    Ok(arr2(&[
        [pref * (m2s - ms * ms), pref * (msr - ms * mr)],
        [pref * (msr - ms * mr), pref * (m2r - mr * mr)],
    ]))
}

fn sigma_theta_sq(f: &SpectralFunctionals) -> f64 {
    2.0 * (f.m22 - f.m11 * f.m11) / f.m11.powi(4)
}

fn alpha2_of(f: &SpectralFunctionals, theta: f64) -> f64 {
    theta / ((theta - 1.0).powi(2) * f.rho * f.m12)
}

fn sigma_alpha2_sq(f: &SpectralFunctionals, theta: f64) -> f64 {
    let q = 2.0 * f.rho * f.m13 / f.m12 - 1.0;
    let pref = 2.0 * theta * theta / ((theta - 1.0) * f.rho * f.m12).powi(4);
    // the cross term uses M11*M12; see the decisions ledger for the
    // correction relative to the printed ratio form
    pref * (f.rho * f.rho * (f.m24 - f.m12 * f.m12) + q * q * (f.m22 - f.m11 * f.m11)
        - 2.0 * f.rho * q * (f.m23 - f.m11 * f.m12))
}

fn sigma_theta_alpha2(f: &SpectralFunctionals, theta: f64) -> f64 {
    2.0 * theta / (f.m11.powi(2) * f.m12.powi(3) * f.rho.powi(2) * (theta - 1.0).powi(2))
        * (f.m11 * f.m12 * f.m12 * f.rho + 2.0 * f.m13 * f.m22 * f.rho
            + f.m11 * f.m11 * (f.m12 - 2.0 * f.m13 * f.rho)
            - f.m12 * (f.m22 + f.m23 * f.rho))
}

/// Joint law of (theta_unbiased, squared angle to the population direction)
/// for one sample in the small-spike regime theta/sqrt(m) -> 0.
pub fn joint_law_smalltheta_single(
    spec: &Spectrum,
    theta: f64,
    m: usize,
) -> Result<GaussianApprox> {
    let f = SpectralFunctionals::at_theta(spec, theta)?;
    let inv_m = 1.0 / m as f64;
    Ok(GaussianApprox {
        mean: vec![theta, alpha2_of(&f, theta)],
        cov: arr2(&[
            [sigma_theta_sq(&f) * inv_m, sigma_theta_alpha2(&f, theta) * inv_m],
            [
                sigma_theta_alpha2(&f, theta) * inv_m,
                sigma_alpha2_sq(&f, theta) * inv_m,
            ],
        ]),
        labels: vec!["theta_unbiased".into(), "angle_sq".into()],
    })
}

/// Joint law of (theta_unbiased_X, theta_unbiased_Y, squared double angle)
/// in the small-spike regime. When `symmetric_cross_tail` is set, the tail
/// of the double-angle variance uses (1-a_X^2)(1-a_Y^2) instead of the
/// squared X factor.
pub fn joint_law_smalltheta(
    spec_x: &Spectrum,
    spec_y: &Spectrum,
    theta: f64,
    m: usize,
    symmetric_cross_tail: bool,
) -> Result<GaussianApprox> {
    let fx = SpectralFunctionals::at_theta(spec_x, theta)?;
    let fy = SpectralFunctionals::at_theta(spec_y, theta)?;
    let ax2 = alpha2_of(&fx, theta);
    let ay2 = alpha2_of(&fy, theta);
    let axy2 = ax2 * ay2;
    let sx = sigma_alpha2_sq(&fx, theta);
    let sy = sigma_alpha2_sq(&fy, theta);
    let tail = if symmetric_cross_tail {
        (1.0 - ax2) * (1.0 - ay2)
    } else {
        (1.0 - ax2) * (1.0 - ax2)
    };
    let s_xy = sx * ay2 * ay2 + sy * ax2 * ax2 + 4.0 * axy2 * tail;
    let inv_m = 1.0 / m as f64;
    let ctx = sigma_theta_alpha2(&fx, theta);
    let cty = sigma_theta_alpha2(&fy, theta);
    Ok(GaussianApprox {
        mean: vec![theta, theta, axy2],
        cov: arr2(&[
            [sigma_theta_sq(&fx) * inv_m, 0.0, ctx * inv_m],
            [0.0, sigma_theta_sq(&fy) * inv_m, cty * inv_m],
            [ctx * inv_m, cty * inv_m, s_xy * inv_m],
        ]),
        labels: vec![
            "theta_unbiased_X".into(),
            "theta_unbiased_Y".into(),
            "angle_sq_XY".into(),
        ],
    })
}

fn largetheta_var_theta(m2: f64, theta: f64) -> f64 {
    // variance of the corrected spike; positive-definite form of the
    // printed entry (see the decisions ledger for the sign)
    2.0 * theta * theta * (m2 - 1.0)
}

fn largetheta_cov(m2: f64, m3: f64) -> f64 {
    2.0 * (2.0 * m2 * m2 - m2 - m3)
}

fn largetheta_var_angle(m2: f64, m3: f64, m4: f64, theta: f64) -> f64 {
    2.0 / (theta * theta) * (4.0 * m2.powi(3) - m2 * m2 - 4.0 * m2 * m3 + m4)
}

/// Single-sample joint law in the large-spike regime theta/sqrt(m) -> inf.
pub fn joint_law_largetheta_single(spec: &Spectrum, theta: f64, m: usize) -> GaussianApprox {
    let (m2, m3, m4) = (spec.moment(2), spec.moment(3), spec.moment(4));
    let inv_m = 1.0 / m as f64;
    GaussianApprox {
        mean: vec![theta, 1.0 + (1.0 - m2) / theta],
        cov: arr2(&[
            [
                largetheta_var_theta(m2, theta) * inv_m,
                largetheta_cov(m2, m3) * inv_m,
            ],
            [
                largetheta_cov(m2, m3) * inv_m,
                largetheta_var_angle(m2, m3, m4, theta) * inv_m,
            ],
        ]),
        labels: vec!["theta_unbiased".into(), "angle_sq".into()],
    }
}

/// Two-sample joint law in the large-spike regime.
pub fn joint_law_largetheta(
    spec_x: &Spectrum,
    spec_y: &Spectrum,
    theta: f64,
    m: usize,
) -> GaussianApprox {
    let (m2x, m3x, m4x) = (spec_x.moment(2), spec_x.moment(3), spec_x.moment(4));
    let (m2y, m3y, m4y) = (spec_y.moment(2), spec_y.moment(3), spec_y.moment(4));
    let s = 2.0 * (4.0 * m2x.powi(3) - m2x * m2x - 4.0 * m2x * m3x + m4x)
        + 2.0 * (4.0 * m2y.powi(3) - m2y * m2y - 4.0 * m2y * m3y + m4y)
        + 4.0 * (m2y - 1.0) * (m2x - 1.0);
    let inv_m = 1.0 / m as f64;
    let cx = largetheta_cov(m2x, m3x);
    let cy = largetheta_cov(m2y, m3y);
    GaussianApprox {
        mean: vec![theta, theta, 1.0 + (2.0 - m2x - m2y) / theta],
        cov: arr2(&[
            [largetheta_var_theta(m2x, theta) * inv_m, 0.0, cx * inv_m],
            [0.0, largetheta_var_theta(m2y, theta) * inv_m, cy * inv_m],
            [cx * inv_m, cy * inv_m, s / (theta * theta) * inv_m],
        ]),
        labels: vec![
            "theta_unbiased_X".into(),
            "theta_unbiased_Y".into(),
            "angle_sq_XY".into(),
        ],
    }
}

/// Intermediate regime theta/sqrt(m) -> constant: first moments from the
/// small-spike law, second moments from the large-spike law.
pub fn joint_law_mixed(
    spec_x: &Spectrum,
    spec_y: &Spectrum,
    theta: f64,
    m: usize,
    symmetric_cross_tail: bool,
) -> Result<GaussianApprox> {
    let small = joint_law_smalltheta(spec_x, spec_y, theta, m, symmetric_cross_tail)?;
    let large = joint_law_largetheta(spec_x, spec_y, theta, m);
    Ok(GaussianApprox {
        mean: small.mean,
        cov: large.cov,
        labels: large.labels,
    })
}

fn m_weighted(
    w: &EigenDecomposition,
    u: &ndarray::Array1<f64>,
    rho: f64,
    r: u32,
    s: u32,
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..w.values.dim() {
        let lam = w.eigenvalues()[i];
        let wi = w.eigenvector(i).dot(u).powi(2);
        let d = rho - lam;
        if s > 0 && d.abs() < 1e-12 && wi > 1e-14 {
            return Err(Error::PoleTooClose(d.abs()));
        }
        let denom = if s == 0 { 1.0 } else { d.powi(s as i32) };
        total += lam.powi(r as i32) / denom * wi;
    }
    Ok(total)
}

/// Three plug-in estimates of the squared angle between the perturbed top
/// eigenvector and the spike direction, valid across spike-size regimes:
/// the rho-expansion, and the two series in 1/theta.
pub fn angle_plugin_estimates(
    w: &EigenDecomposition,
    pert: &PerturbationSpec,
    rho: f64,
) -> Result<[f64; 3]> {
    let theta = pert.theta;
    let spec = &w.values;
    let m12 = spec.m_functional(rho, 1, 2)?;
    let m13 = spec.m_functional(rho, 1, 3)?;
    let m2 = spec.moment(2);
    let wm11 = m_weighted(w, &pert.u, rho, 1, 1)?;
    let wm12 = m_weighted(w, &pert.u, rho, 1, 2)?;
    let wm1 = m_weighted(w, &pert.u, rho, 1, 0)?;
    let wm2 = m_weighted(w, &pert.u, rho, 2, 0)?;
    let wm3 = m_weighted(w, &pert.u, rho, 3, 0)?;
    let est1 = theta / (theta - 1.0).powi(2)
        * (1.0 / (rho * m12)
            + (2.0 * m13 / m12 - 1.0 / rho) * (wm11 - 1.0 / (theta - 1.0)) / (rho * m12 * m12)
            - (wm12 - m12) / (rho * m12 * m12));
    let est2 = 1.0 + (1.0 - wm2 + 2.0 * m2 * (wm1 - 1.0)) / theta
        + (1.0 - 2.0 * wm2 + 3.0 * wm2 * wm2 - 2.0 * wm3) / (theta * theta);
    let est3 = 1.0 + 1.0 / theta - wm2 / theta + 2.0 / theta * m2 * (wm1 - 1.0);
    Ok([est1, est2, est3])
}

/// Exact identity for the squared angle at the realized top eigenvalue
/// theta_hat of the perturbed matrix.
pub fn angle_exact(
    w: &EigenDecomposition,
    pert: &PerturbationSpec,
    theta_hat: f64,
) -> Result<f64> {
    let wm12 = m_weighted(w, &pert.u, theta_hat, 1, 2)?;
    let theta = pert.theta;
    Ok(theta / ((theta - 1.0).powi(2) * theta_hat * wm12))
}

/// Gaussian approximation of the double angle (not squared): mean and
/// standard deviation of `<u_X, u_Y>` given the two single angles.
pub fn double_angle_approx(
    angle_x_e1: f64,
    angle_y_e1: f64,
    m2x: f64,
    m2y: f64,
    theta: f64,
    m: usize,
) -> (f64, f64) {
    let sd = ((m2x - 1.0).max(0.0) * (m2y - 1.0).max(0.0)).sqrt() / theta / (m as f64).sqrt();
    (angle_x_e1 * angle_y_e1, sd)
}

/// Closed-form Wishart (Marcenko-Pastur bulk) specializations, c = m/n.
pub mod wishart {
    /// Mean squared angle in the small-spike regime.
    pub fn angle_sq_mean(c: f64, theta: f64) -> f64 {
        (1.0 - c / (theta - 1.0).powi(2)) / (1.0 + c / (theta - 1.0))
    }

    /// m times the variance of the corrected spike estimate.
    pub fn var_theta(c: f64, theta: f64) -> f64 {
        -2.0 * c * (theta - 1.0).powi(2) * theta * theta / (c - (theta - 1.0).powi(2))
    }

    /// m times the covariance of the corrected spike and the squared angle.
    pub fn cov_theta_angle(c: f64, theta: f64) -> f64 {
        -2.0 * c * c * (theta - 1.0) * theta.powi(3)
            / ((c - (theta - 1.0).powi(2)) * (c + theta - 1.0).powi(2))
    }

    /// m times the variance of the squared angle to the spike direction.
    pub fn var_angle(c: f64, theta: f64) -> f64 {
        -2.0 * c * c * theta * theta
            * (c * c + (theta * (theta + 2.0) - 2.0) * c + (theta - 1.0).powi(2))
            / ((c - (theta - 1.0).powi(2)) * (c + theta - 1.0).powi(4))
    }

    /// m times the variance of the squared double angle between the two
    /// estimated spike directions.
    pub fn var_double_angle(c: f64, theta: f64) -> f64 {
        4.0 * c * c * theta * theta * (c - (theta - 1.0).powi(2)).powi(2)
            * (c.powi(3)
                + 4.0 * c * c * (theta - 1.0)
                + c * (theta - 1.0) * (theta * (theta + 5.0) - 5.0)
                + 2.0 * (theta - 1.0).powi(3))
            / ((theta - 1.0).powi(4) * (c + theta - 1.0).powi(7))
    }

    /// Mean squared double angle.
    pub fn double_angle_sq_mean(c: f64, theta: f64) -> f64 {
        angle_sq_mean(c, theta).powi(2)
    }

    /// Large-spike regime 2x2 covariance block, m-scaled.
    pub fn largetheta_cov_single(c: f64, theta: f64) -> [[f64; 2]; 2] {
        [
            [2.0 * c * theta * theta, 2.0 * c * c],
            [2.0 * c * c, 2.0 * c * c * (c + 1.0) / (theta * theta)],
        ]
    }

    /// Invariant-vector remark: covariance of (sum lambda u^2, sum lambda^2 u^2).
    pub fn invariant_pair_cov(c: f64) -> [[f64; 2]; 2] {
        [
            [2.0 * c, 2.0 * c * (2.0 + c)],
            [2.0 * c * (2.0 + c), 2.0 * c * (c + 1.0) * (c + 4.0)],
        ]
    }
}
