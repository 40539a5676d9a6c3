//! Riemannian geometry of the SPD manifold.
//!
//! Two metrics are supported: the affine-invariant metric (AIRM),
//! `d(A, B) = ‖log(A^{-1/2} B A^{-1/2})‖_F`, and the log-Euclidean metric,
//! `d(A, B) = ‖log A − log B‖_F`. Both come with a Kärcher (Fréchet) mean;
//! the log-Euclidean one is closed form, the AIRM one is a fixed-point
//! iteration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::{sym_eig, SpdMatrix, SymmetricMatrix, EXP_LIMIT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Airm,
    LogEuclidean,
}

/// Stopping rule for the AIRM mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanOptions {
    /// Frobenius norm of the Riemannian gradient at which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MeanOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50 }
    }
}

fn check_same_dim(a: &SpdMatrix, b: &SpdMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

fn check_set(set: &[SpdMatrix]) -> Result<usize> {
    let first = set
        .first()
        .ok_or_else(|| Error::invalid("cannot average an empty set of matrices"))?;
    let n = first.dim();
    if set.iter().any(|x| x.dim() != n) {
        return Err(Error::invalid("matrices in the set have different dimensions"));
    }
    Ok(n)
}

fn congruence_dense(e: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    SymmetricMatrix::symmetrized(e * x * e.transpose()).into_matrix()
}

/// Eigenvalues of `W X W` for symmetric `W`.
fn whitened_eigenvalues(w: &DMatrix<f64>, x: &SpdMatrix) -> DVector<f64> {
    congruence_dense(w, x.as_matrix()).symmetric_eigenvalues()
}

/// `log(W X W)` for symmetric `W`.
fn whitened_log(w: &DMatrix<f64>, x: &SpdMatrix) -> Result<DMatrix<f64>> {
    whitened_log_cond(w, x).map(|(log, _)| log)
}

/// `log(W X W)` and the condition number of `W X W`.
fn whitened_log_cond(w: &DMatrix<f64>, x: &SpdMatrix) -> Result<(DMatrix<f64>, f64)> {
    let inner = SymmetricMatrix::symmetrized(congruence_dense(w, x.as_matrix()));
    let eig = sym_eig(&inner)?;
    if eig.min() <= 0.0 {
        return Err(Error::NumericFailure(format!(
            "whitened matrix lost positive definiteness (λmin {:e})",
            eig.min()
        )));
    }
    Ok((eig.map_values(f64::ln), eig.max() / eig.min()))
}

/// `(c + 1)/(c − 1)·log c`, which tends to 2 as `c → 1`.
fn cond_weight(c: f64) -> f64 {
    let l = c.ln();
    if l < 1e-6 {
        2.0 + l * l / 6.0
    } else {
        (c + 1.0) / (c - 1.0) * l
    }
}

pub fn dist_airm(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    if a == b {
        return Ok(0.0);
    }
    let (_, isqrt) = a.sqrt_and_inv_sqrt();
    let ev = whitened_eigenvalues(&isqrt, b);
    if ev.iter().any(|&v| v <= 0.0) {
        return Err(Error::NumericFailure("non-positive generalized eigenvalue".into()));
    }
    Ok(ev.iter().map(|v| v.ln().powi(2)).sum::<f64>().sqrt())
}

pub fn dist_logeuclid(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    if a == b {
        return Ok(0.0);
    }
    Ok((a.log_dense() - b.log_dense()).norm())
}

pub fn distance(metric: Metric, a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    match metric {
        Metric::Airm => dist_airm(a, b),
        Metric::LogEuclidean => dist_logeuclid(a, b),
    }
}

/// Closed-form log-Euclidean mean `exp(mean(log Xᵢ))`.
pub fn mean_logeuclid(set: &[SpdMatrix]) -> Result<SpdMatrix> {
    let n = check_set(set)?;
    if set.len() == 1 {
        return Ok(set[0].clone());
    }
    let mut acc = DMatrix::zeros(n, n);
    for x in set {
        acc += x.log_dense();
    }
    acc /= set.len() as f64;
    exp_symmetric(acc)
}

fn exp_symmetric(s: DMatrix<f64>) -> Result<SpdMatrix> {
    crate::spd::matrix_exp(&SymmetricMatrix::symmetrized(s))
}

/// Riemannian gradient direction `(1/N) Σ log(M^{-1/2} Xᵢ M^{-1/2})` and its Frobenius norm.
pub fn airm_gradient(m: &SpdMatrix, set: &[SpdMatrix]) -> Result<(DMatrix<f64>, f64)> {
    let n = check_set(set)?;
    if n != m.dim() {
        return Err(Error::invalid("mean and set dimensions differ"));
    }
    let (_, isqrt) = m.sqrt_and_inv_sqrt();
    let mut g = DMatrix::zeros(n, n);
    for x in set {
        g += whitened_log(&isqrt, x)?;
    }
    g /= set.len() as f64;
    let norm = g.norm();
    Ok((g, norm))
}

/// AIRM Kärcher mean by the fixed-point iteration
/// `M ← M^{1/2} exp(θG) M^{1/2}`, starting from the log-Euclidean mean.
///
/// The step `θ = 2 / mean((cᵢ + 1)/(cᵢ − 1)·log cᵢ)`, with `cᵢ` the condition
/// number of the whitened `Xᵢ` (Bini and Iannazzo), is 1 for tight sets and
/// damps the overshoot of the plain step on dispersed ones.
pub fn mean_airm(set: &[SpdMatrix], opts: MeanOptions) -> Result<SpdMatrix> {
    check_set(set)?;
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("mean tolerance must be positive"));
    }
    if set.len() == 1 {
        return Ok(set[0].clone());
    }
    let mut m = mean_logeuclid(set)?;
    let mut iter = 0;
    loop {
        let (sqrt, isqrt) = m.sqrt_and_inv_sqrt();
        let mut g = DMatrix::zeros(m.dim(), m.dim());
        let mut weight_sum = 0.0;
        for x in set {
            let (log, cond) = whitened_log_cond(&isqrt, x)?;
            g += log;
            weight_sum += cond_weight(cond);
        }
        g /= set.len() as f64;
        let residual = g.norm();
        if residual <= opts.tol {
            return Ok(m);
        }
        if iter == opts.max_iter {
            return Err(Error::ConvergenceFailure {
                iterations: iter,
                residual,
                last_iterate: Box::new(m),
            });
        }
        let theta = 2.0 * set.len() as f64 / weight_sum;
        let step = sym_eig(&SymmetricMatrix::symmetrized(g * theta))?;
        if step.max() > EXP_LIMIT {
            return Err(Error::NumericOverflow("AIRM mean step overflowed".into()));
        }
        let exp_g = step.map_values(f64::exp);
        m = SpdMatrix::new(SymmetricMatrix::symmetrized(congruence_dense(&sqrt, &exp_g)))?;
        iter += 1;
    }
}

/// Kärcher mean under `metric`, with default AIRM stopping rule.
pub fn karcher_mean(set: &[SpdMatrix], metric: Metric) -> Result<SpdMatrix> {
    match metric {
        Metric::LogEuclidean => mean_logeuclid(set),
        Metric::Airm => mean_airm(set, MeanOptions::default()),
    }
}

/// Congruence map `E = M_train^{1/2} M_test^{-1/2}` that carries the AIRM
/// mean of a test set onto the training mean.
#[derive(Clone, Debug)]
pub struct Recentering {
    map: DMatrix<f64>,
    identity: bool,
}

impl Recentering {
    pub fn new(mean_train: &SpdMatrix, mean_test: &SpdMatrix) -> Result<Self> {
        check_same_dim(mean_train, mean_test)?;
        if mean_train == mean_test {
            return Ok(Self { map: DMatrix::identity(mean_train.dim(), mean_train.dim()), identity: true });
        }
        let (train_sqrt, _) = mean_train.sqrt_and_inv_sqrt();
        let (_, test_isqrt) = mean_test.sqrt_and_inv_sqrt();
        Ok(Self { map: train_sqrt * test_isqrt, identity: false })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.map
    }

    /// `E X Eᵀ`.
    pub fn apply(&self, x: &SpdMatrix) -> Result<SpdMatrix> {
        if x.dim() != self.map.nrows() {
            return Err(Error::invalid("recentering dimension mismatch"));
        }
        if self.identity {
            return Ok(x.clone());
        }
        SpdMatrix::new(SymmetricMatrix::symmetrized(congruence_dense(&self.map, x.as_matrix())))
    }
}

pub fn transport_to_mean(
    test_set: &[SpdMatrix],
    mean_train: &SpdMatrix,
    mean_test: &SpdMatrix,
) -> Result<Vec<SpdMatrix>> {
    let e = Recentering::new(mean_train, mean_test)?;
    test_set.iter().map(|x| e.apply(x)).collect()
}

/// Coordinates of a symmetric matrix in an orthonormal basis: upper triangle,
/// row by row, off-diagonal entries scaled by `√2`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    n: usize,
    coords: DVector<f64>,
}

impl TangentVector {
    pub fn new(n: usize, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != n * (n + 1) / 2 {
            return Err(Error::invalid(format!(
                "tangent coordinates have length {}, expected {} for n = {n}",
                coords.len(),
                n * (n + 1) / 2
            )));
        }
        Ok(Self { n, coords })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, coords: DVector::zeros(n * (n + 1) / 2) }
    }

    pub fn base_dim(&self) -> usize {
        self.n
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    pub fn from_symmetric(s: &DMatrix<f64>) -> Self {
        let n = s.nrows();
        let mut coords = DVector::zeros(n * (n + 1) / 2);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                coords[k] = if i == j { s[(i, i)] } else { std::f64::consts::SQRT_2 * s[(i, j)] };
                k += 1;
            }
        }
        Self { n, coords }
    }

    pub fn to_symmetric(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut s = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                if i == j {
                    s[(i, i)] = self.coords[k];
                } else {
                    let v = self.coords[k] / std::f64::consts::SQRT_2;
                    s[(i, j)] = v;
                    s[(j, i)] = v;
                }
                k += 1;
            }
        }
        s
    }
}

/// Log and exp maps at a fixed base point, with its square roots cached.
#[derive(Clone, Debug)]
pub struct TangentSpace {
    base: SpdMatrix,
    sqrt: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
}

impl TangentSpace {
    pub fn new(base: SpdMatrix) -> Self {
        let (sqrt, inv_sqrt) = base.sqrt_and_inv_sqrt();
        Self { base, sqrt, inv_sqrt }
    }

    pub fn base(&self) -> &SpdMatrix {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim() * (self.base.dim() + 1) / 2
    }

    pub fn map(&self, x: &SpdMatrix) -> Result<TangentVector> {
        check_same_dim(x, &self.base)?;
        if *x == self.base {
            return Ok(TangentVector::zeros(x.dim()));
        }
        Ok(TangentVector::from_symmetric(&whitened_log(&self.inv_sqrt, x)?))
    }

    pub fn unmap(&self, t: &TangentVector) -> Result<SpdMatrix> {
        if t.n != self.base.dim() {
            return Err(Error::invalid("tangent vector does not match base point dimension"));
        }
        if t.coords.iter().all(|&c| c == 0.0) {
            return Ok(self.base.clone());
        }
        let eig = sym_eig(&SymmetricMatrix::symmetrized(t.to_symmetric()))?;
        if eig.max() > EXP_LIMIT {
            return Err(Error::NumericOverflow("tangent vector too large to exponentiate".into()));
        }
        let e = eig.map_values(f64::exp);
        SpdMatrix::new(SymmetricMatrix::symmetrized(congruence_dense(&self.sqrt, &e)))
    }
}

pub fn tangent_map(x: &SpdMatrix, m: &SpdMatrix) -> Result<TangentVector> {
    TangentSpace::new(m.clone()).map(x)
}

pub fn tangent_unmap(t: &TangentVector, m: &SpdMatrix) -> Result<SpdMatrix> {
    TangentSpace::new(m.clone()).unmap(t)
}
