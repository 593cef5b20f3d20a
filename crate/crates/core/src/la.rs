//! Dense symmetric-positive-definite linear algebra primitives.
//!
//! Everything downstream (classification rules, rate formulas, the simulation
//! harness) is built on the operations here: sample moments, Cholesky
//! factorization with log-determinant, quadratic forms through triangular
//! solves, and symmetric matrix square roots.
//!
//! Explicit matrix inverses are never formed. Every application of an inverse
//! goes through a triangular solve against a Cholesky factor, which is both
//! more accurate and O(p^2) per right-hand side.
//!
//! There is no ridge or jitter regularization anywhere: a sample covariance
//! that is not positive definite is a hard error, because silently shifting
//! the spectrum would change the statistic being computed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check on [`SpdMatrix`] construction.
const SYMMETRY_RTOL: f64 = 1e-10;

/// Eigenvalues of a PSD input may dip this far below zero (relative to the
/// largest eigenvalue) before [`sqrt_spd`] treats the matrix as indefinite.
const PSD_RTOL: f64 = 1e-10;

/// A p x n data matrix holding n observation vectors of length p, one per column.
///
/// Construction verifies that every entry is finite; shape errors and NaN/inf
/// surface here instead of deep inside a factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    m: DMatrix<f64>,
}

impl DataMatrix {
    /// Wraps a p x n matrix of observations (columns).
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { m })
    }

    /// Builds a data matrix from observation columns, all of equal length.
    pub fn from_columns(cols: &[DVector<f64>]) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::EmptySample);
        }
        let p = cols[0].len();
        for c in cols {
            if c.len() != p {
                return Err(Error::DimMismatch {
                    expected: p,
                    got: c.len(),
                });
            }
        }
        let m = DMatrix::from_fn(p, cols.len(), |i, j| cols[j][i]);
        Self::new(m)
    }

    /// Dimension p of each observation.
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Number of observations n.
    pub fn count(&self) -> usize {
        self.m.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// The j-th observation.
    pub fn column(&self, j: usize) -> DVector<f64> {
        self.m.column(j).into_owned()
    }

    /// A new data matrix keeping only the given coordinates (rows), in the
    /// given order. Indices are 0-based and must be in range.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let p = self.dim();
        if let Some(&bad) = idx.iter().find(|&&i| i >= p) {
            return Err(Error::DimMismatch {
                expected: p,
                got: bad,
            });
        }
        let m = DMatrix::from_fn(idx.len(), self.count(), |i, j| self.m[(idx[i], j)]);
        Ok(Self { m })
    }

    /// A new data matrix keeping only observations (columns) in `start..end`.
    pub fn slice_columns(&self, start: usize, end: usize) -> Self {
        Self {
            m: self.m.columns(start, end - start).into_owned(),
        }
    }
}

/// A symmetric matrix intended to be positive definite.
///
/// Construction enforces squareness, finiteness, and symmetry to within a
/// 1e-10 relative tolerance, then symmetrizes exactly as (A + A')/2 so that
/// floating-point drift from matrix products cannot reintroduce asymmetry.
/// Positive definiteness itself is verified at factorization time by
/// [`cholesky`]; a constructor cannot check it any cheaper than the
/// factorization everyone performs next anyway.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    m: DMatrix<f64>,
}

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = m.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-300);
        let mut asym = 0.0f64;
        for j in 0..m.ncols() {
            for i in (j + 1)..m.nrows() {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if asym > SYMMETRY_RTOL * scale {
            return Err(Error::NotSymmetric { asym: asym / scale });
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self { m: sym })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            m: DMatrix::identity(p, p),
        }
    }

    /// kappa * I_p; kappa must be positive and finite.
    pub fn scaled_identity(p: usize, kappa: f64) -> Result<Self> {
        if !kappa.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            m: DMatrix::identity(p, p) * kappa,
        })
    }

    pub fn from_diagonal(d: &DVector<f64>) -> Result<Self> {
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            m: DMatrix::from_diagonal(d),
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.m
    }
}

/// Lower-triangular Cholesky factor of an SPD matrix, with its log-determinant.
///
/// For S = L L', `log_det` is log|S| = 2 * sum_i log L_ii, accumulated during
/// the factorization so no determinant is ever formed explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    l: DMatrix<f64>,
    log_det: f64,
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Rebuilds L L' (test and diagnostics aid).
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }

    /// Solves S x = b through the two triangular solves.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .l
            .solve_lower_triangular(b)
            .expect("factor has positive diagonal");
        self.l
            .tr_solve_lower_triangular(&y)
            .expect("factor has positive diagonal")
    }

    /// Solves S X = B column-by-column via the triangular factors.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self
            .l
            .solve_lower_triangular(b)
            .expect("factor has positive diagonal");
        self.l
            .tr_solve_lower_triangular(&y)
            .expect("factor has positive diagonal")
    }

    /// Forward substitution only: returns L^{-1} b.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l
            .solve_lower_triangular(b)
            .expect("factor has positive diagonal")
    }

    /// Forward substitution on a matrix: returns L^{-1} B.
    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.l
            .solve_lower_triangular(b)
            .expect("factor has positive diagonal")
    }

    /// Rebuilds a factor from a stored lower triangle and log-determinant
    /// (deserialization path). The diagonal must be strictly positive.
    pub fn from_parts(l: DMatrix<f64>, log_det: f64) -> Result<Self> {
        if l.nrows() != l.ncols() {
            return Err(Error::NotSquare {
                rows: l.nrows(),
                cols: l.ncols(),
            });
        }
        if l.iter().any(|v| !v.is_finite()) || !log_det.is_finite() {
            return Err(Error::NonFinite);
        }
        if let Some(j) = (0..l.nrows()).find(|&j| l[(j, j)] <= 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        Ok(Self { l, log_det })
    }
}

/// Arithmetic mean of the observation columns.
pub fn sample_mean(x: &DataMatrix) -> Result<DVector<f64>> {
    let n = x.count();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut acc = DVector::zeros(x.dim());
    for j in 0..n {
        acc += x.as_matrix().column(j);
    }
    Ok(acc / n as f64)
}

/// Unbiased sample covariance with divisor n - 1.
///
/// The result is exactly symmetric ((A + A')/2 applied on construction) but
/// not necessarily positive definite; rank deficiency is only detected when
/// the caller factorizes it.
pub fn sample_covariance(x: &DataMatrix) -> Result<SpdMatrix> {
    let n = x.count();
    if n < 2 {
        return Err(Error::InsufficientSample { n });
    }
    let mean = sample_mean(x)?;
    let mut centered = x.as_matrix().clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    // X_c X_c' computed as (X_c')' (X_c') so the gemm kernel sees the
    // contiguous layout it is fastest on.
    let xt = centered.transpose();
    let s = xt.tr_mul(&xt) / (n as f64 - 1.0);
    SpdMatrix::new(s)
}

/// Cholesky factorization S = L L' with the log-determinant accumulated on
/// the fly.
///
/// Fails with the index of the first non-positive pivot, which is the usual
/// symptom of p >= n - 1 or otherwise degenerate data.
pub fn cholesky(s: &SpdMatrix) -> Result<CholFactor> {
    let p = s.dim();
    let a = s.as_matrix();
    // Column-major buffer; element (i, j) lives at j*p + i.
    let mut l = vec![0.0f64; p * p];
    for j in 0..p {
        for i in j..p {
            l[j * p + i] = a[(i, j)];
        }
    }
    let mut log_det = 0.0f64;
    for j in 0..p {
        let (done, rest) = l.split_at_mut(j * p);
        let colj = &mut rest[..p];
        // Left-looking update: col_j -= L_jk * col_k for every finished column.
        for k in 0..j {
            let colk = &done[k * p..(k + 1) * p];
            let ljk = colk[j];
            if ljk != 0.0 {
                for i in j..p {
                    colj[i] -= ljk * colk[i];
                }
            }
        }
        let d = colj[j];
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let r = d.sqrt();
        log_det += 2.0 * r.ln();
        colj[j] = r;
        let inv = 1.0 / r;
        for i in (j + 1)..p {
            colj[i] *= inv;
        }
    }
    Ok(CholFactor {
        l: DMatrix::from_vec(p, p, l),
        log_det,
    })
}

/// Quadratic form v' S^{-1} v evaluated as ||L^{-1} v||^2, hence always >= 0.
pub fn quad_form(v: &DVector<f64>, f: &CholFactor) -> Result<f64> {
    if v.len() != f.dim() {
        return Err(Error::DimMismatch {
            expected: f.dim(),
            got: v.len(),
        });
    }
    let u = f.solve_lower(v);
    Ok(u.norm_squared())
}

/// Symmetric square root of a PSD matrix via its eigendecomposition.
///
/// Eigenvalues in [-1e-10 * lambda_max, 0] are clamped to zero; anything
/// further below zero is a hard error. Diagonal inputs (exact zeros off the
/// diagonal) take a closed-form path with no eigendecomposition.
pub fn sqrt_spd(s: &SpdMatrix) -> Result<SpdMatrix> {
    let p = s.dim();
    let a = s.as_matrix();

    let is_diagonal = (0..p).all(|j| (0..p).all(|i| i == j || a[(i, j)] == 0.0));
    if is_diagonal {
        let lam_max = (0..p).fold(0.0f64, |m, i| m.max(a[(i, i)]));
        let tol = PSD_RTOL * lam_max;
        let mut d = DVector::zeros(p);
        for i in 0..p {
            let lam = a[(i, i)];
            if lam < -tol {
                return Err(Error::NotPsd { value: lam });
            }
            d[i] = lam.max(0.0).sqrt();
        }
        return SpdMatrix::from_diagonal(&d);
    }

    let eig = nalgebra::SymmetricEigen::new(a.clone());
    let lam_max = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    let tol = PSD_RTOL * lam_max;
    let mut roots = DVector::zeros(p);
    for i in 0..p {
        let lam = eig.eigenvalues[i];
        if lam < -tol {
            return Err(Error::NotPsd { value: lam });
        }
        roots[i] = lam.max(0.0).sqrt();
    }
    // Q diag(sqrt(lambda)) Q', assembled as W W' with W = Q diag(lambda^{1/4})
    // so the product is symmetric by construction up to one symmetrization.
    let mut w = eig.eigenvectors;
    for (j, mut col) in w.column_iter_mut().enumerate() {
        col *= roots[j].sqrt();
    }
    let wt = w.transpose();
    let root = wt.tr_mul(&wt);
    SpdMatrix::new(root)
}
