//! Dense symmetric linear algebra and the SPD cone.
//!
//! [`SymmetricMatrix`] stores an exactly symmetric matrix. [`SpdMatrix`] adds a
//! checked eigendecomposition and a lower bound on its spectrum; every matrix
//! function here (`log`, `exp`, powers) goes through that decomposition.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest eigenvalue accepted by [`matrix_exp`]; `exp(709.8)` overflows f64.
pub const EXP_LIMIT: f64 = 700.0;

const SYMMETRY_TOL: f64 = 1e-10;

/// Numerical resolution of a spectrum: eigenvalues closer than this to zero
/// cannot be told apart from zero after reassembling `V diag(λ) Vᵀ`.
fn spectral_resolution(values: &DVector<f64>) -> f64 {
    let n = values.len() as f64;
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    8.0 * n * f64::EPSILON * scale
}

/// Square real matrix with `a[i][j] == a[j][i]` bit for bit.
#[derive(Clone, PartialEq)]
pub struct SymmetricMatrix {
    data: DMatrix<f64>,
}

impl SymmetricMatrix {
    /// Accepts a finite square matrix that is symmetric up to rounding
    /// (relative 1e-10) and stores its exact symmetric part.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::invalid(format!(
                        "matrix is not symmetric at ({i}, {j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetric part `(M + Mᵀ)/2` of any finite square matrix.
    pub fn from_symmetric_part(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        Ok(Self::symmetrized(m))
    }

    /// Builds from the upper triangle `f(i, j)`, `i <= j`.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        check_square_finite(&m)?;
        Ok(Self { data: m })
    }

    pub fn identity(n: usize) -> Self {
        Self { data: DMatrix::identity(n, n) }
    }

    pub fn zeros(n: usize) -> Self {
        Self { data: DMatrix::zeros(n, n) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(diag));
        check_square_finite(&m)?;
        Ok(Self { data: m })
    }

    /// Symmetrizes without validation; callers guarantee finiteness.
    pub(crate) fn symmetrized(mut m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self { data: m }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.data.row(i).iter().copied().collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("matrix rows are not square"));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

impl fmt::Debug for SymmetricMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymmetricMatrix{}", self.data)
    }
}

impl Serialize for SymmetricMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymmetricMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Self::from_rows(&rows).map_err(D::Error::custom)
    }
}

fn check_square_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid(format!(
            "matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::invalid("matrix must have dimension >= 1"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    Ok(())
}

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenPair {
    /// `V diag(f(λ)) Vᵀ`, exactly symmetric.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.vectors.nrows(), self.vectors.ncols(), |i, j| {
            self.vectors[(i, j)] * f(self.values[j])
        });
        SymmetricMatrix::symmetrized(&scaled * self.vectors.transpose()).data
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Symmetric eigendecomposition, ascending eigenvalues.
///
/// Eigenvector signs are fixed so the entry of largest magnitude is positive,
/// which makes the factorization canonical for a given input.
pub fn sym_eig(s: &SymmetricMatrix) -> Result<EigenPair> {
    if s.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite entries in eigendecomposition input"));
    }
    let n = s.dim();
    let eig = SymmetricEigen::try_new(s.data.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericFailure("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = col.iter().fold(0.0f64, |best, &v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(dst, &(col * sign));
    }
    Ok(EigenPair { values, vectors })
}

/// Symmetric positive-definite matrix with its cached eigendecomposition.
#[derive(Clone)]
pub struct SpdMatrix {
    matrix: SymmetricMatrix,
    eigen: EigenPair,
    min_eig_bound: f64,
}

impl SpdMatrix {
    /// Fails with [`Error::NotPositiveDefinite`] unless the smallest eigenvalue
    /// is positive by more than the numerical resolution of the spectrum.
    pub fn new(matrix: SymmetricMatrix) -> Result<Self> {
        let eigen = sym_eig(&matrix)?;
        let slack = spectral_resolution(&eigen.values);
        let min = eigen.min();
        if min <= slack {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        Ok(Self { matrix, eigen, min_eig_bound: min - slack })
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        Self::new(SymmetricMatrix::new(m)?)
    }

    pub fn identity(n: usize) -> Self {
        Self::new(SymmetricMatrix::identity(n)).expect("identity is SPD")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(SymmetricMatrix::from_diagonal(diag)?)
    }

    /// Assembles `V diag(values) Vᵀ` and validates it.
    pub(crate) fn from_eigen(values: &DVector<f64>, vectors: &DMatrix<f64>) -> Result<Self> {
        let pair = EigenPair { values: values.clone(), vectors: vectors.clone() };
        let m = pair.map_values(|v| v);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow("matrix function produced non-finite entries".into()));
        }
        Self::new(SymmetricMatrix { data: m })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn symmetric(&self) -> &SymmetricMatrix {
        &self.matrix
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix.data
    }

    pub fn eigen(&self) -> &EigenPair {
        &self.eigen
    }

    pub fn min_eig_bound(&self) -> f64 {
        self.min_eig_bound
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn determinant(&self) -> f64 {
        self.eigen.values.iter().product()
    }

    pub fn log_determinant(&self) -> f64 {
        self.eigen.values.iter().map(|v| v.ln()).sum()
    }

    /// `A^p` as a dense matrix, skipping SPD revalidation.
    pub fn power_dense(&self, p: f64) -> DMatrix<f64> {
        self.eigen.map_values(|v| v.powf(p))
    }

    /// `(A^{1/2}, A^{-1/2})` from one decomposition.
    pub fn sqrt_and_inv_sqrt(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            self.eigen.map_values(f64::sqrt),
            self.eigen.map_values(|v| 1.0 / v.sqrt()),
        )
    }

    pub fn log_dense(&self) -> DMatrix<f64> {
        self.eigen.map_values(f64::ln)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.rows()
    }
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl fmt::Debug for SpdMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpdMatrix(λmin≥{:e}){}", self.min_eig_bound, self.matrix.data)
    }
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.matrix.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = SymmetricMatrix::deserialize(d)?;
        SpdMatrix::new(m).map_err(D::Error::custom)
    }
}

/// Principal matrix logarithm.
pub fn matrix_log(a: &SpdMatrix) -> SymmetricMatrix {
    SymmetricMatrix { data: a.log_dense() }
}

pub fn matrix_exp(s: &SymmetricMatrix) -> Result<SpdMatrix> {
    let eig = sym_eig(s)?;
    if eig.max() > EXP_LIMIT {
        return Err(Error::NumericOverflow(format!(
            "eigenvalue {} exceeds exp limit {EXP_LIMIT}",
            eig.max()
        )));
    }
    SpdMatrix::from_eigen(&eig.values.map(f64::exp), &eig.vectors)
}

pub fn matrix_power(a: &SpdMatrix, p: f64) -> Result<SpdMatrix> {
    if !p.is_finite() {
        return Err(Error::invalid("matrix power exponent must be finite"));
    }
    if p == 1.0 {
        return Ok(a.clone());
    }
    SpdMatrix::from_eigen(&a.eigen.values.map(|v| v.powf(p)), &a.eigen.vectors)
}

/// Frobenius-nearest matrix whose eigenvalues are all at least `eps`.
///
/// Eigenvalues below `eps` are clamped; the eigenvectors are kept. When the
/// input already satisfies the floor it is returned unchanged. The clamp
/// target is `eps` plus the spectral resolution of the input so that the
/// reassembled matrix still certifies `λmin ≥ eps`.
pub fn nearest_spd(s: &SymmetricMatrix, eps: f64) -> Result<SpdMatrix> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("SPD floor must be positive, got {eps}")));
    }
    let eig = sym_eig(s)?;
    if eig.min() >= eps {
        if let Ok(spd) = SpdMatrix::new(s.clone()) {
            return Ok(spd);
        }
    }
    let clamped = eig.values.map(|v| v.max(eps));
    let floor = eps + spectral_resolution(&clamped);
    let clamped = eig.values.map(|v| v.max(floor));
    SpdMatrix::from_eigen(&clamped, &eig.vectors)
}

/// Ledoit–Wolf style shrinkage toward the scaled identity:
/// `(1 − γ)·C + γ·(tr C / n)·I`.
pub fn shrink_covariance(c: &SymmetricMatrix, gamma: f64) -> Result<SpdMatrix> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("shrinkage must lie in [0, 1], got {gamma}")));
    }
    if gamma == 0.0 {
        return SpdMatrix::new(c.clone());
    }
    let n = c.dim();
    let tr = c.trace();
    if tr <= 0.0 {
        return Err(Error::DegenerateInput(format!(
            "covariance trace {tr} is not positive; shrinkage target undefined"
        )));
    }
    let target = tr / n as f64;
    let mut m = c.data.scale(1.0 - gamma);
    for i in 0..n {
        m[(i, i)] += gamma * target;
    }
    SpdMatrix::new(SymmetricMatrix { data: m })
}
