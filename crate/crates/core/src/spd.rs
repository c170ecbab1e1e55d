//! Symmetric positive-definite matrices and log-Euclidean geometry.
//!
//! Every connectome lives on the SPD cone. Under the log-Euclidean framework
//! the matrix logarithm maps each point to the tangent space at the identity,
//! so parallel transport between tangent spaces reduces to the identity map
//! and distances become Frobenius norms of log-matrix differences.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Default eigenvalue threshold for [`validate_spd`].
pub const DEFAULT_VALIDATE_EPS: f64 = 1e-10;
/// Default eigenvalue floor for [`nearest_spd`].
pub const DEFAULT_SPD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpdError {
    #[error("matrix is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("empty matrix")]
    Empty,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

pub type Result<T> = std::result::Result<T, SpdError>;

/// Dense symmetric matrix. Construction always yields exactly symmetric storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps a matrix that must already be exactly symmetric.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        let d = m.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                if m[(i, j)] != m[(j, i)] && !(m[(i, j)].is_nan() && m[(j, i)].is_nan()) {
                    return Err(SpdError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { inner: m })
    }

    /// Symmetrizes by averaging with the transpose.
    pub fn symmetrize(m: &DMatrix<f64>) -> Result<Self> {
        check_square(m)?;
        Ok(Self { inner: symmetric_part(m) })
    }

    pub fn from_row_slice(dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != dim * dim {
            return Err(SpdError::DimensionMismatch { left: values.len(), right: dim * dim });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, values))
    }

    pub fn identity(dim: usize) -> Self {
        Self { inner: DMatrix::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { inner: DMatrix::zeros(dim, dim) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self { inner: DMatrix::from_diagonal(&DVector::from_column_slice(diag)) }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn is_finite(&self) -> bool {
        self.inner.iter().all(|v| v.is_finite())
    }

    /// Squared Frobenius norm.
    pub fn frobenius_sq(&self) -> f64 {
        self.inner.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_inner(&self, other: &SymMatrix) -> f64 {
        self.inner.iter().zip(other.inner.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_same_dim(self.dim(), other.dim())?;
        Ok(SymMatrix { inner: &self.inner - &other.inner })
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix { inner: &self.inner * c }
    }

    /// Eigen-decomposition through the symmetric solver.
    pub fn eigh(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if !self.is_finite() {
            return Err(SpdError::NonFinite);
        }
        let eig = SymmetricEigen::new(self.inner.clone());
        Ok((eig.eigenvalues, eig.eigenvectors))
    }

    pub fn eigenvalues(&self) -> Result<DVector<f64>> {
        if !self.is_finite() {
            return Err(SpdError::NonFinite);
        }
        Ok(SymmetricEigen::new(self.inner.clone()).eigenvalues)
    }

    /// `U f(Λ) Uᵀ`, symmetrized.
    fn spectral_map(values: &DVector<f64>, vectors: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mapped = values.map(f);
        let scaled = vectors * DMatrix::from_diagonal(&mapped);
        SymMatrix { inner: symmetric_part(&(scaled * vectors.transpose())) }
    }
}

/// A validated SPD matrix with its minimum eigenvalue cached.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    base: SymMatrix,
    min_eigenvalue: f64,
}

impl SpdMatrix {
    pub fn as_sym(&self) -> &SymMatrix {
        &self.base
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.base.as_matrix()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn identity(dim: usize) -> Self {
        Self { base: SymMatrix::identity(dim), min_eigenvalue: 1.0 }
    }

    /// Validates with [`DEFAULT_VALIDATE_EPS`].
    pub fn try_from_sym(m: SymMatrix) -> Result<Self> {
        validate_spd(m, DEFAULT_VALIDATE_EPS)
    }
}

/// Symmetric tangent matrix at the identity plus its √2-scaled
/// upper-triangular vectorization.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    matrix: SymMatrix,
    vectorized: Vec<f64>,
}

impl TangentVector {
    pub fn from_matrix(matrix: SymMatrix) -> Self {
        let vectorized = vectorize_upper(&matrix);
        Self { matrix, vectorized }
    }

    pub fn from_vectorized(dim: usize, v: &[f64]) -> Result<Self> {
        let matrix = unvectorize_upper(dim, v)?;
        Ok(Self { matrix, vectorized: v.to_vec() })
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn vectorized(&self) -> &[f64] {
        &self.vectorized
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// Length of the upper-triangular vectorization of a `dim`×`dim` matrix.
pub fn vectorized_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Row-major upper triangle including the diagonal; off-diagonals scaled by √2
/// so that the Euclidean inner product matches the Frobenius one.
pub fn vectorize_upper(m: &SymMatrix) -> Vec<f64> {
    let d = m.dim();
    let mut out = Vec::with_capacity(vectorized_len(d));
    for i in 0..d {
        out.push(m.get(i, i));
        for j in (i + 1)..d {
            out.push(m.get(i, j) * SQRT_2);
        }
    }
    out
}

pub fn unvectorize_upper(dim: usize, v: &[f64]) -> Result<SymMatrix> {
    if v.len() != vectorized_len(dim) {
        return Err(SpdError::DimensionMismatch { left: v.len(), right: vectorized_len(dim) });
    }
    let mut m = DMatrix::zeros(dim, dim);
    let mut k = 0;
    for i in 0..dim {
        m[(i, i)] = v[k];
        k += 1;
        for j in (i + 1)..dim {
            let x = v[k] / SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    Ok(SymMatrix { inner: m })
}

/// Accepts `m` iff its smallest eigenvalue exceeds `eps`.
pub fn validate_spd(m: SymMatrix, eps: f64) -> Result<SpdMatrix> {
    if !(eps > 0.0) {
        return Err(SpdError::InvalidParameter("eps must be positive"));
    }
    let values = m.eigenvalues()?;
    let min_eig = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig > eps {
        Ok(SpdMatrix { base: m, min_eigenvalue: min_eig })
    } else {
        Err(SpdError::NotPositiveDefinite { min_eig })
    }
}

/// Clamps the spectrum from below at `floor` and reconstructs.
///
/// Inputs whose spectrum already sits at or above `floor` are returned
/// unchanged, which makes the map an exact projection.
pub fn nearest_spd(m: &SymMatrix, floor: f64) -> Result<SpdMatrix> {
    if !(floor > 0.0) {
        return Err(SpdError::InvalidParameter("floor must be positive"));
    }
    let (values, vectors) = m.eigh()?;
    let min_eig = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig >= floor {
        return Ok(SpdMatrix { base: m.clone(), min_eigenvalue: min_eig });
    }
    let repaired = SymMatrix::spectral_map(&values, &vectors, |l| l.max(floor));
    // reconstruction error can push the smallest eigenvalue a hair below floor
    let min_eig = repaired.eigenvalues()?.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig > floor / 2.0 {
        Ok(SpdMatrix { base: repaired, min_eigenvalue: min_eig })
    } else {
        Err(SpdError::NotPositiveDefinite { min_eig })
    }
}

pub fn matrix_log(s: &SpdMatrix) -> Result<SymMatrix> {
    let (values, vectors) = s.as_sym().eigh()?;
    if let Some(bad) = values.iter().copied().find(|l| *l <= 0.0) {
        return Err(SpdError::NotPositiveDefinite { min_eig: bad });
    }
    Ok(SymMatrix::spectral_map(&values, &vectors, f64::ln))
}

pub fn matrix_exp(t: &SymMatrix) -> Result<SpdMatrix> {
    let (values, vectors) = t.eigh()?;
    let out = SymMatrix::spectral_map(&values, &vectors, f64::exp);
    let min_eig = values.iter().copied().fold(f64::INFINITY, f64::min).exp();
    if min_eig > 0.0 && out.is_finite() {
        Ok(SpdMatrix { base: out, min_eigenvalue: min_eig })
    } else {
        Err(SpdError::NotPositiveDefinite { min_eig })
    }
}

/// Inverse square root `s^{-1/2}`.
pub fn matrix_inv_sqrt(s: &SpdMatrix) -> Result<SymMatrix> {
    let (values, vectors) = s.as_sym().eigh()?;
    if let Some(bad) = values.iter().copied().find(|l| *l <= 0.0) {
        return Err(SpdError::NotPositiveDefinite { min_eig: bad });
    }
    Ok(SymMatrix::spectral_map(&values, &vectors, |l| 1.0 / l.sqrt()))
}

/// Projection to the common tangent space at the identity.
pub fn log_map(s: &SpdMatrix) -> Result<TangentVector> {
    Ok(TangentVector::from_matrix(matrix_log(s)?))
}

/// `‖log a − log b‖²_F`. The squared form is not a metric; see [`dist_lerm_root`].
pub fn dist_lerm(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a.dim(), b.dim())?;
    let la = matrix_log(a)?;
    let lb = matrix_log(b)?;
    Ok(la.sub(&lb)?.frobenius_sq())
}

/// Same as [`dist_lerm`] on precomputed log-matrices.
pub fn dist_lerm_logs(la: &SymMatrix, lb: &SymMatrix) -> Result<f64> {
    Ok(la.sub(lb)?.frobenius_sq())
}

/// `‖log a − log b‖_F`, the log-Euclidean geodesic distance.
pub fn dist_lerm_root(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    dist_lerm(a, b).map(f64::sqrt)
}

/// Affine-invariant distance `sqrt(Σ log² λ_i)` with `λ` the spectrum of `a^{-1/2} b a^{-1/2}`.
pub fn dist_airm(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a.dim(), b.dim())?;
    let w = matrix_inv_sqrt(a)?;
    let w = w.as_matrix();
    let congr = SymMatrix::symmetrize(&(w * b.as_matrix() * w))?;
    let values = congr.eigenvalues()?;
    let mut acc = 0.0;
    for l in values.iter() {
        if *l <= 0.0 {
            return Err(SpdError::NotPositiveDefinite { min_eig: *l });
        }
        acc += l.ln().powi(2);
    }
    Ok(acc.sqrt())
}

/// `Tr(P (log P − log Q))`.
pub fn kl_divergence(p: &SpdMatrix, q: &SpdMatrix) -> Result<f64> {
    check_same_dim(p.dim(), q.dim())?;
    let diff = matrix_log(p)?.sub(&matrix_log(q)?)?;
    // trace of a product of symmetric matrices is their Frobenius inner product
    Ok(p.as_sym().frobenius_inner(&diff))
}

/// Symmetrized divergence through the midpoint `M = (P + Q)/2`.
pub fn dist_skldm(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a.dim(), b.dim())?;
    let mid = SymMatrix::symmetrize(&((a.as_matrix() + b.as_matrix()) * 0.5))?;
    let mid = validate_spd(mid, f64::MIN_POSITIVE)?;
    let log_mid = matrix_log(&mid)?;
    let half = |p: &SpdMatrix| -> Result<f64> {
        let diff = matrix_log(p)?.sub(&log_mid)?;
        Ok(p.as_sym().frobenius_inner(&diff))
    };
    Ok(0.5 * (half(a)? + half(b)?))
}

/// Distance selector shared by the CLI and FFI layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Lerm,
    Airm,
    Skldm,
}

impl Metric {
    pub fn distance(self, a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
        match self {
            Metric::Lerm => dist_lerm(a, b),
            Metric::Airm => dist_airm(a, b),
            Metric::Skldm => dist_skldm(a, b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Lerm => "lerm",
            Metric::Airm => "airm",
            Metric::Skldm => "skldm",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lerm" => Ok(Metric::Lerm),
            "airm" => Ok(Metric::Airm),
            "skldm" => Ok(Metric::Skldm),
            other => Err(format!("unknown metric '{other}' (expected lerm, airm or skldm)")),
        }
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(SpdError::NonSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.nrows() == 0 {
        return Err(SpdError::Empty);
    }
    Ok(())
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(SpdError::DimensionMismatch { left: a, right: b })
    }
}

fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    DMatrix::from_fn(d, d, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}
