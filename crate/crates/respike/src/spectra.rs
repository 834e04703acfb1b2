//! Spectrum container and scalar spectral statistics.
//!
//! Everything downstream (spike estimation, null law, criterion) consumes the
//! [`Spectrum`] type rather than raw matrices, so estimated and idealized
//! spectra share one code path.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

mod lapack {
    use std::os::raw::{c_char, c_int};

    extern "C" {
        pub fn dsyevd_(
            jobz: *const c_char,
            uplo: *const c_char,
            n: *const c_int,
            a: *mut f64,
            lda: *const c_int,
            w: *mut f64,
            work: *mut f64,
            lwork: *const c_int,
            iwork: *mut c_int,
            liwork: *const c_int,
            info: *mut c_int,
        );
    }
}

/// Sorted nonnegative eigenvalues of a symmetric matrix.
///
/// Values are kept in descending order. Tiny negative values produced by the
/// solver (below `1e-12 * lambda_max` in magnitude) are clamped to zero so the
/// M-functionals stay well defined.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
    normalized: bool,
}

impl Spectrum {
    /// Build a spectrum from raw eigenvalues (any order).
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.partial_cmp(a).expect("non-finite eigenvalue"));
        let lam_max = values.first().copied().unwrap_or(0.0).abs();
        let clamp = 1e-12 * lam_max;
        for v in values.iter_mut() {
            if *v < 0.0 && *v > -clamp {
                *v = 0.0;
            }
        }
        Spectrum {
            values,
            normalized: false,
        }
    }

    /// Eigenvalues, descending.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Dimension m.
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Whether the trace has been rescaled to m.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Rescale so the trace equals the dimension m.
    pub fn normalize_trace(&self) -> Result<Spectrum> {
        let s = self.sum();
        if s <= 0.0 {
            return Err(Error::ZeroTrace);
        }
        let k = self.dim() as f64 / s;
        Ok(Spectrum {
            values: self.values.iter().map(|v| v * k).collect(),
            normalized: true,
        })
    }

    /// Plain spectral moment M_s = (1/m) sum_i lambda_i^s for s in 1..=8.
    pub fn moment(&self, s: u32) -> f64 {
        assert!((1..=8).contains(&s), "moment order must be in 1..=8");
        let m = self.dim() as f64;
        self.values.iter().map(|l| l.powi(s as i32)).sum::<f64>() / m
    }

    /// M-functional (1/m) sum_i lambda_i^{s1} / (rho - lambda_i)^{s2}.
    ///
    /// With `s2 = 0` this reduces to [`Spectrum::moment`]. For `s2 > 0` the
    /// point `rho` must sit strictly above the spectrum.
    pub fn m_functional(&self, rho: f64, s1: u32, s2: u32) -> Result<f64> {
        if s2 == 0 {
            return Ok(self.moment(s1));
        }
        let gap = rho - self.max();
        if gap < 1e-9 {
            return Err(Error::PoleTooClose(gap));
        }
        let m = self.dim() as f64;
        let sum: f64 = self
            .values
            .iter()
            .map(|&l| l.powi(s1 as i32) / (rho - l).powi(s2 as i32))
            .sum();
        Ok(sum / m)
    }

    /// Empirical T-transform T(z) = (1/m) sum_i lambda_i / (z - lambda_i).
    pub fn t_transform(&self, z: f64) -> Result<f64> {
        self.m_functional(z, 1, 1)
    }
}

/// Group label for a moment set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    X,
    Y,
    Pooled,
}

/// Second to fourth plain spectral moments of one bulk.
///
/// Constructed from an actual [`Spectrum`] (or the exact Marcenko-Pastur
/// limits), which guards the null-law polynomial against unrealizable
/// (M2, M3, M4) combinations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSet {
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub source: Group,
}

impl MomentSet {
    pub fn from_spectrum(spec: &Spectrum, source: Group) -> Self {
        MomentSet {
            m2: spec.moment(2),
            m3: spec.moment(3),
            m4: spec.moment(4),
            source,
        }
    }

    /// Exact Marcenko-Pastur moments for aspect ratio c = m/n.
    pub fn marcenko_pastur(c: f64, source: Group) -> Self {
        MomentSet {
            m2: 1.0 + c,
            m3: 1.0 + 3.0 * c + c * c,
            m4: 1.0 + 6.0 * c + 6.0 * c * c + c * c * c,
            source,
        }
    }
}

/// Full symmetric eigendecomposition: eigenvalues descending, eigenvectors as
/// matching columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Spectrum,
    pub vectors: Array2<f64>,
}

impl EigenDecomposition {
    /// Eigenvalues in the raw (possibly unclamped) descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        self.values.values()
    }

    /// Column `i` is the eigenvector for the i-th largest eigenvalue.
    pub fn eigenvector(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.vectors.column(i)
    }
}

fn symmetry_defect(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut max_asym = 0.0f64;
    let mut max_abs = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            max_asym = max_asym.max((a[[i, j]] - a[[j, i]]).abs());
        }
        for j in 0..n {
            max_abs = max_abs.max(a[[i, j]].abs());
        }
    }
    if max_abs == 0.0 {
        0.0
    } else {
        max_asym / max_abs
    }
}

/// Eigendecomposition of a symmetric matrix via LAPACK `dsyevd`.
pub fn eig_sym(a: &Array2<f64>) -> Result<EigenDecomposition> {
    use std::os::raw::{c_char, c_int};

    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let defect = symmetry_defect(a);
    if defect > 1e-10 {
        return Err(Error::NonSymmetric(defect));
    }

    let n = a.nrows();
    let nn = n as c_int;
    // dsyevd reads the lower triangle; symmetric input makes the row/column
    // major distinction irrelevant.
    let mut buf: Vec<f64> = a.iter().cloned().collect();
    let mut w = vec![0.0f64; n];
    let mut info: c_int = 0;
    let jobz = b'V' as c_char;
    let uplo = b'L' as c_char;
    unsafe {
        let mut wq = [0.0f64];
        let mut iwq: [c_int; 1] = [0];
        let m1: c_int = -1;
        lapack::dsyevd_(
            &jobz,
            &uplo,
            &nn,
            buf.as_mut_ptr(),
            &nn,
            w.as_mut_ptr(),
            wq.as_mut_ptr(),
            &m1,
            iwq.as_mut_ptr(),
            &m1,
            &mut info,
        );
        let lwork = wq[0] as c_int;
        let liwork = iwq[0];
        let mut work = vec![0.0f64; lwork as usize];
        let mut iwork = vec![0 as c_int; liwork as usize];
        lapack::dsyevd_(
            &jobz,
            &uplo,
            &nn,
            buf.as_mut_ptr(),
            &nn,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::ConvergenceFailure(info));
    }

    // LAPACK returns ascending eigenvalues with eigenvectors in the rows of
    // the (column-major) output buffer; flip to descending columns.
    let mut vectors = Array2::<f64>::zeros((n, n));
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let src = n - 1 - k;
        values.push(w[src]);
        for i in 0..n {
            vectors[[i, k]] = buf[src * n + i];
        }
    }
    Ok(EigenDecomposition {
        values: Spectrum::new(values),
        vectors,
    })
}

/// Weighted empirical T-transform sum_i lambda_i/(z - lambda_i) <u_i, u>^2.
pub fn weighted_t_transform(
    decomp: &EigenDecomposition,
    u: &Array1<f64>,
    z: f64,
) -> Result<f64> {
    let norm = u.dot(u).sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotUnit(norm));
    }
    let gap = z - decomp.values.max();
    if gap < 1e-9 {
        return Err(Error::PoleTooClose(gap));
    }
    let mut acc = 0.0;
    for (i, &lam) in decomp.eigenvalues().iter().enumerate() {
        let w = decomp.eigenvector(i).dot(u).powi(2);
        acc += lam / (z - lam) * w;
    }
    Ok(acc)
}
