use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NonSymmetric(f64),
    #[error("eigensolver failed to converge (LAPACK info code {0})")]
    ConvergenceFailure(i32),
    #[error("spectrum has zero trace")]
    ZeroTrace,
    #[error("evaluation point too close to a spectral pole (gap {0:.3e})")]
    PoleTooClose(f64),
    #[error("vector is not unit length (norm {0})")]
    NotUnit(f64),
    #[error("degenerate spectrum: top eigenvalue within {0:.3e} of the bulk edge")]
    DegenerateSpectrum(f64),
    #[error("no detectable spike in the sample")]
    NotDetectable,
    #[error("bulk spectra too concentrated: M2_X + M2_Y <= 2")]
    DegenerateBulk,
    #[error("no admissible root above the bulk for theta = {0}")]
    NoRoot(f64),
    #[error("residual-spike radicand negative (complex branch) at theta = {0}")]
    ComplexBranch(f64),
    #[error("failed to bracket a secular root in ({0}, {1})")]
    RootBracketFailure(f64, f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix has no nonzero eigenvalues")]
    AllZero,
    #[error("spike sizes differ: not a null-hypothesis study")]
    NotNull,
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
