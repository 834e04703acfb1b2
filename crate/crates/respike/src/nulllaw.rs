//! Asymptotic null distribution of the extreme residual spikes: the general
//! moment-based law, its Marcenko-Pastur and vanishing-aspect-ratio
//! specializations, residual-zone endpoints, and p-values.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::spectra::MomentSet;

/// Gaussian approximations of the largest and smallest residual spike under
/// the null hypothesis. The standard deviations carry the sqrt(m) scaling:
/// the largest spike is approximately N(lambda_plus, sigma_plus^2 / m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullLaw {
    pub lambda_plus: f64,
    pub sigma_plus: f64,
    pub lambda_minus: f64,
    pub sigma_minus: f64,
    pub m: usize,
}

/// Which product of estimates defines the residual spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneVariant {
    /// Both covariance estimates filtered to rank-one form.
    BothFiltered,
    /// Filtered X estimate against the raw Y estimate.
    FilteredRaw,
}

/// Interval the residual eigenvalues can occupy under the null.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualZone {
    pub lower: f64,
    pub upper: f64,
    pub variant: ZoneVariant,
}

fn format_sig12(x: f64) -> String {
    format!("{:.11e}", x)
}

impl NullLaw {
    /// Serialize with a fixed 12-significant-digit float format, so that
    /// library and CLI emissions are byte-identical.
    pub fn to_json(&self) -> String {
        format!(
            "{{\"schema\":\"1\",\"m\":{},\"lambda_plus\":{},\"sigma_plus\":{},\"lambda_minus\":{},\"sigma_minus\":{}}}",
            self.m,
            format_sig12(self.lambda_plus),
            format_sig12(self.sigma_plus),
            format_sig12(self.lambda_minus),
            format_sig12(self.sigma_minus),
        )
    }
}

/// The variance polynomial of the largest residual spike, as a function of
/// the plain bulk moments of the two samples. Transcribed monomial by
/// monomial; the grouping mirrors the closed-form blocks.
fn sigma_plus_sq(mx: &MomentSet, my: &MomentSet) -> Result<f64> {
    let (m2x, m3x, m4x) = (mx.m2, mx.m3, mx.m4);
    let (m2y, m3y, m4y) = (my.m2, my.m3, my.m4);
    let den = (m2x + m2y - 2.0) * (m2x + m2y + 2.0);
    if m2x + m2y <= 2.0 + 1e-9 {
        return Err(Error::DegenerateBulk);
    }
    let a = 9.0 * m2x.powi(4) * m2y
        + 4.0 * m2x.powi(3) * m2y.powi(2)
        + 4.0 * m2x.powi(3) * m2y
        + 2.0 * m2x.powi(3) * m3y
        - 2.0 * m2x.powi(2) * m2y.powi(3)
        + 4.0 * m2x.powi(2) * m2y.powi(2)
        - 11.0 * m2x.powi(2) * m2y
        - 8.0 * m3x * m2x.powi(2) * m2y
        + 2.0 * m2x.powi(2) * m2y * m3y
        - 2.0 * m2x.powi(2) * m3y
        + m2x.powi(2) * m4y
        + 4.0 * m2x * m2y.powi(3)
        + m2x * m2y.powi(2)
        + 4.0 * m2x * m2y
        - 4.0 * m3x * m2x * m2y.powi(2)
        - 4.0 * m3x * m2x * m2y
        - 2.0 * m2x * m2y.powi(2) * m3y
        - 4.0 * m2x * m2y * m3y
        - 6.0 * m2x * m3y
        + 2.0 * m4x * m2x * m2y
        + 2.0 * m2x * m2y * m4y
        - 2.0 * m3x * m2y.powi(2)
        + 2.0 * m3x * m2y
        + m4x * m2y.powi(2)
        + 4.0 * m2x.powi(5)
        + 2.0 * m2x.powi(4)
        - 4.0 * m3x * m2x.powi(3)
        - 13.0 * m2x.powi(3)
        - 2.0 * m3x * m2x.powi(2)
        + m4x * m2x.powi(2)
        - 2.0 * m2x.powi(2)
        + 10.0 * m3x * m2x
        + 4.0 * m2x
        + 4.0 * m3x
        - 2.0 * m4x
        + m2y.powi(5)
        + 2.0 * m2y.powi(4)
        - m2y.powi(3)
        - 2.0 * m2y.powi(2)
        + 4.0 * m2y
        - 2.0 * m2y.powi(3) * m3y
        - 2.0 * m2y.powi(2) * m3y
        + 2.0 * m2y * m3y
        + 4.0 * m3y
        + m2y.powi(2) * m4y
        - 2.0 * m4y
        - 4.0;
    let b = 5.0 * m2x.powi(3) * m2y
        - m2x.powi(2) * m2y.powi(2)
        + 2.0 * m2x.powi(2) * m2y
        + 2.0 * m2x.powi(2) * m3y
        - m2x * m2y.powi(3)
        + 2.0 * m2x * m2y.powi(2)
        - 4.0 * m2x * m2y
        - 4.0 * m3x * m2x * m2y
        - 2.0 * m2x * m3y
        + m2x * m4y
        - 2.0 * m3x * m2y
        + m4x * m2y
        + 4.0 * m2x.powi(4)
        + 2.0 * m2x.powi(3)
        - 4.0 * m3x * m2x.powi(2)
        - 5.0 * m2x.powi(2)
        - 2.0 * m3x * m2x
        + m4x * m2x
        + 2.0 * m2x
        + 2.0 * m3x
        + m2y.powi(4)
        + 2.0 * m2y.powi(3)
        + m2y.powi(2)
        + 2.0 * m2y
        - 2.0 * m2y.powi(2) * m3y
        - 2.0 * m2y * m3y
        - 2.0 * m3y
        + m2y * m4y;
    Ok(a / den + b / den.sqrt())
}

fn law_from_m2(m2: f64, sigma_plus_sq: f64, m: usize) -> NullLaw {
    let root = (m2 * m2 - 1.0).max(0.0).sqrt();
    let lambda_plus = m2 + root;
    let lambda_minus = m2 - root;
    let sigma_plus = sigma_plus_sq.max(0.0).sqrt();
    // smallest-spike variance rule: sigma_minus^2 = lambda_minus^4 sigma_plus^2
    let sigma_minus = lambda_minus * lambda_minus * sigma_plus;
    NullLaw {
        lambda_plus,
        sigma_plus,
        lambda_minus,
        sigma_minus,
        m,
    }
}

/// Null law from the plain bulk moments of the two samples.
pub fn null_law_general(mom_x: &MomentSet, mom_y: &MomentSet, m: usize) -> Result<NullLaw> {
    let s2 = sigma_plus_sq(mom_x, mom_y)?;
    let m2 = 0.5 * (mom_x.m2 + mom_y.m2);
    Ok(law_from_m2(m2, s2, m))
}

/// Closed-form null law for Marcenko-Pastur bulks with aspect ratios
/// c_x = m/n_x and c_y = m/n_y.
pub fn null_law_mp(cx: f64, cy: f64, m: usize) -> NullLaw {
    let c = 0.5 * (cx + cy);
    let s = (c * (c + 2.0)).sqrt();
    let part1 = cx.powi(3) + cx.powi(2) * cy + 3.0 * cx.powi(2) + 4.0 * cx * cy - cx
        + cy.powi(2)
        + cy;
    let poly = cx.powi(3) + 5.0 * cx.powi(2) + cx.powi(2) * cy + 4.0 * cx * cy + 5.0 * cx
        + 3.0 * cy
        + cy.powi(2);
    let sigma_sq = part1 + (4.0 * cx + cx * cx + poly * s) / (c + 2.0);
    law_from_m2(1.0 + c, sigma_sq, m)
}

/// Null law in the limit where the X sample grows much faster than the
/// dimension (c_x -> 0), driven by the Y bulk moments alone.
pub fn null_law_cx_zero(mom_y: &MomentSet, m: usize) -> Result<NullLaw> {
    let (m2y, m3y, m4y) = (mom_y.m2, mom_y.m3, mom_y.m4);
    if m2y <= 1.0 + 1e-9 {
        return Err(Error::DegenerateBulk);
    }
    let den = (m2y - 1.0) * (m2y + 3.0);
    let a = m2y.powi(5) + 2.0 * m2y.powi(4) - 2.0 * m3y * m2y.powi(3) + m2y.powi(3)
        - 4.0 * m3y * m2y.powi(2)
        + m4y * m2y.powi(2)
        + 2.0 * m2y.powi(2)
        + 2.0 * m4y * m2y
        + 2.0 * m2y
        - 2.0 * m3y
        - m4y
        - 2.0;
    let b = m2y.powi(4) + m2y.powi(3) - 2.0 * m3y * m2y.powi(2) + 2.0 * m2y.powi(2)
        - 2.0 * m3y * m2y
        + m4y * m2y
        - 2.0 * m3y
        + m4y;
    let sigma_sq = a / den + b / den.sqrt();
    Ok(law_from_m2(0.5 * (1.0 + m2y), sigma_sq, m))
}

/// Residual-zone endpoints for Marcenko-Pastur bulks with a common aspect
/// ratio c.
pub fn residual_zone(c: f64, variant: ZoneVariant) -> ResidualZone {
    match variant {
        ZoneVariant::BothFiltered => {
            let s = (c * c + 2.0 * c).sqrt();
            ResidualZone {
                lower: 1.0 + c - s,
                upper: 1.0 + c + s,
                variant,
            }
        }
        ZoneVariant::FilteredRaw => ResidualZone {
            lower: (1.0 - c.sqrt()).powi(2),
            upper: 0.5 * (2.0 + c + (c * c + 4.0 * c).sqrt()),
            variant,
        },
    }
}

/// Two-sided p-values for the observed extreme residual spikes.
pub fn pvalues(law: &NullLaw, observed_max: f64, observed_min: f64) -> (f64, f64) {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let root_m = (law.m as f64).sqrt();
    let z_max = root_m * (observed_max - law.lambda_plus) / law.sigma_plus;
    let z_min = root_m * (observed_min - law.lambda_minus) / law.sigma_minus;
    (1.0 - std.cdf(z_max), std.cdf(z_min))
}
