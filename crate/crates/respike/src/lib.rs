//! Residual-spike test for equality of two high-dimensional covariance
//! matrices estimated from data with a rank-one multiplicative perturbation.
//!
//! The library is organized in layers: [`spectra`] holds eigenvalue
//! containers and spectral functionals, [`algebra`] the exact finite-m
//! perturbation identities, [`spike`] spike estimation and filtering,
//! [`nulllaw`] the limiting law of the extreme residual eigenvalues,
//! [`asymptotics`] joint Gaussian approximations for the estimators,
//! [`criterion`] the monotonicity diagnostic, [`testkit`] the end-to-end
//! hypothesis test plus classical baselines, and [`simlab`] reproducible
//! simulation studies.

pub mod algebra;
pub mod asymptotics;
pub mod criterion;
pub mod error;
pub mod nulllaw;
pub mod simlab;
pub mod spectra;
pub mod spike;
pub mod testkit;

pub use error::{Error, Result};
