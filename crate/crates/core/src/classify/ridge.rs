use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest squared Cholesky pivot, relative to the largest Gram diagonal,
/// accepted as non-singular.
const SINGULAR_RTOL: f64 = 1e-12;

/// Binary ridge classifier with targets encoded as −1/+1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    weights: Vec<f64>,
    intercept: f64,
    alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RidgePrediction {
    /// True for the +1 class. A zero score goes to the −1 (first) class.
    pub positive: bool,
    pub score: f64,
}

/// Solves `(XcᵀXc + αI) w = Xcᵀ yc` on column-centred data; the intercept
/// absorbs the means.
pub fn ridge_fit(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> Result<RidgeModel> {
    let (rows, d) = x.shape();
    if rows == 0 || rows != y.len() {
        return Err(Error::invalid(format!("{rows} feature rows but {} targets", y.len())));
    }
    if y.iter().any(|&t| t != 1.0 && t != -1.0) {
        return Err(Error::invalid("ridge targets must be -1 or +1"));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(format!("ridge alpha must be >= 0, got {alpha}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("ridge features contain non-finite values"));
    }

    let x_mean = x.row_mean();
    let y_mean = y.iter().sum::<f64>() / rows as f64;
    let mut xc = x.clone();
    for mut r in xc.row_iter_mut() {
        r -= &x_mean;
    }
    let yc = DVector::from_iterator(rows, y.iter().map(|t| t - y_mean));

    let mut gram = xc.transpose() * &xc;
    for i in 0..d {
        gram[(i, i)] += alpha;
    }
    let rhs = xc.transpose() * yc;
    let diag_max = gram.diagonal().amax();
    let singular = || Error::NumericFailure("ridge normal equations are singular; use alpha > 0".into());
    let chol = Cholesky::new(gram).ok_or_else(singular)?;
    let pivot_min = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if d > 0 && !(pivot_min > SINGULAR_RTOL * diag_max) {
        return Err(singular());
    }
    let w = chol.solve(&rhs);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure("ridge solve produced non-finite weights".into()));
    }
    let intercept = y_mean - (x_mean * &w)[0];
    Ok(RidgeModel { weights: w.iter().copied().collect(), intercept, alpha })
}

pub fn ridge_predict(model: &RidgeModel, row: &[f64]) -> Result<RidgePrediction> {
    let score = model.score(row)?;
    Ok(RidgePrediction { positive: score > 0.0, score })
}

impl RidgeModel {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.weights.len() {
            return Err(Error::invalid(format!(
                "ridge expects {} features, got {}",
                self.weights.len(),
                row.len()
            )));
        }
        Ok(self.intercept + self.weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::LU;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Dense oracle: augment with a constant column and solve the full normal
    /// equations by LU, leaving the intercept unpenalised.
    fn oracle(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> (DVector<f64>, f64) {
        let (rows, d) = x.shape();
        let mut a = DMatrix::zeros(rows, d + 1);
        a.view_mut((0, 0), (rows, d)).copy_from(x);
        a.column_mut(d).fill(1.0);
        let mut g = a.transpose() * &a;
        for i in 0..d {
            g[(i, i)] += alpha;
        }
        let rhs = a.transpose() * DVector::from_column_slice(y);
        let sol = LU::new(g).solve(&rhs).unwrap();
        (sol.rows(0, d).into_owned(), sol[d])
    }

    fn random_problem(seed: u64, rows: usize, d: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(rows, d, |_, _| { let v: f64 = StandardNormal.sample(&mut rng); v });
        let y = (0..rows).map(|i| if (x[(i, 0)] + x[(i, 1)]) > 0.0 { 1.0 } else { -1.0 }).collect();
        (x, y)
    }

    #[test]
    fn two_point_problem() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let m = ridge_fit(&x, &[1.0, -1.0], 0.0).unwrap();
        assert!((m.weights()[0] - 1.0).abs() < 1e-15);
        assert!(ridge_predict(&m, &[1.0]).unwrap().positive);
        assert!(!ridge_predict(&m, &[-1.0]).unwrap().positive);
    }

    #[test]
    fn huge_alpha_shrinks_to_intercept() {
        let (x, mut y) = random_problem(3, 20, 5);
        y.iter_mut().take(14).for_each(|t| *t = 1.0);
        let m = ridge_fit(&x, &y, 1e9).unwrap();
        let norm = m.weights().iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!(norm <= 1e-6);
        for i in 0..20 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            assert!(ridge_predict(&m, &row).unwrap().positive);
        }
    }

    #[test]
    fn matches_dense_oracle() {
        let (x, y) = random_problem(4, 20, 5);
        let m = ridge_fit(&x, &y, 0.5).unwrap();
        let (w, b) = oracle(&x, &y, 0.5);
        for (a, e) in m.weights().iter().zip(w.iter()) {
            assert!((a - e).abs() < 1e-8);
        }
        assert!((m.intercept() - b).abs() < 1e-8);
    }

    #[test]
    fn zero_score_goes_to_first_class() {
        let m = RidgeModel { weights: vec![1.0], intercept: 0.0, alpha: 1.0 };
        assert!(!ridge_predict(&m, &[0.0]).unwrap().positive);
    }

    #[test]
    fn errors() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(ridge_fit(&x, &[1.0, -1.0], 0.0), Err(Error::NumericFailure(_))));
        assert!(ridge_fit(&x, &[1.0, 0.0], 1.0).is_err());
        assert!(ridge_fit(&x, &[1.0], 1.0).is_err());
        assert!(ridge_fit(&x, &[1.0, -1.0], -1.0).is_err());
        let m = ridge_fit(&x, &[1.0, -1.0], 1.0).unwrap();
        assert!(m.score(&[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn oracle_equivalence(seed in any::<u64>(), alpha_idx in 0usize..3) {
            let alpha = [1e-3, 1.0, 100.0][alpha_idx];
            let (x, y) = random_problem(seed, 30, 6);
            let m = ridge_fit(&x, &y, alpha).unwrap();
            let (w, b) = oracle(&x, &y, alpha);
            for (a, e) in m.weights().iter().zip(w.iter()) {
                prop_assert!((a - e).abs() < 1e-8);
            }
            prop_assert!((m.intercept() - b).abs() < 1e-8);
        }
    }
}
