use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{check_lengths, class_partition, Prediction};
use crate::error::{Error, Result};
use crate::spd::{sym_eig, SpdMatrix, SymmetricMatrix};

/// Spatial filters as columns, with their generalized eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct CspFilters {
    filters: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

/// Solves `C₁w = λ(C₁+C₂)w` on the class-mean covariances and keeps the
/// `m/2` filters with the largest and the `m/2` with the smallest λ.
pub fn csp_fit(covs: &[SpdMatrix], labels: &[i32], m_filters: usize) -> Result<CspFilters> {
    check_lengths(covs.len(), labels.len())?;
    let (classes, members) = class_partition(labels)?;
    if classes.len() != 2 {
        return Err(Error::invalid(format!("CSP needs exactly two classes, found {}", classes.len())));
    }
    let n = covs[0].dim();
    if covs.iter().any(|c| c.dim() != n) {
        return Err(Error::invalid("covariance matrices have different dimensions"));
    }
    if m_filters == 0 || m_filters % 2 != 0 || m_filters > n {
        return Err(Error::invalid(format!(
            "filter count must be even and between 2 and {n}, got {m_filters}"
        )));
    }
    let means: Vec<DMatrix<f64>> = members
        .iter()
        .map(|idx| idx.iter().fold(DMatrix::zeros(n, n), |acc, &i| acc + covs[i].as_matrix()) / idx.len() as f64)
        .collect();
    let (c1, c2) = (&means[0], &means[1]);

    let chol = Cholesky::new(c1 + c2).ok_or_else(|| Error::NumericFailure("composite covariance is singular".into()))?;
    let l = chol.l();
    let tri = |m: &DMatrix<f64>| {
        l.solve_lower_triangular(m)
            .ok_or_else(|| Error::NumericFailure("triangular solve failed".into()))
    };
    let reduced = tri(&tri(c1)?.transpose())?;
    let eig = sym_eig(&SymmetricMatrix::from_symmetric_part(reduced)?)?;
    let all = l
        .transpose()
        .solve_upper_triangular(&eig.vectors)
        .ok_or_else(|| Error::NumericFailure("triangular solve failed".into()))?;

    let half = m_filters / 2;
    let picks: Vec<usize> = (n - half..n).rev().chain(0..half).collect();
    let filters = DMatrix::from_fn(n, m_filters, |r, c| all[(r, picks[c])]);
    let eigenvalues = picks.iter().map(|&k| eig.values[k]).collect();
    Ok(CspFilters { filters, eigenvalues })
}

impl CspFilters {
    pub fn filters(&self) -> &DMatrix<f64> {
        &self.filters
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Log-variance of each filtered component, `log(wᵀCw)`.
    pub fn log_variance(&self, cov: &SpdMatrix) -> Result<DVector<f64>> {
        if cov.dim() != self.filters.nrows() {
            return Err(Error::invalid("covariance dimension does not match CSP filters"));
        }
        let proj = self.filters.transpose() * cov.as_matrix() * &self.filters;
        Ok(DVector::from_iterator(proj.nrows(), proj.diagonal().iter().map(|v| v.max(f64::MIN_POSITIVE).ln())))
    }
}

/// CSP log-variance features, standardised, then two-class LDA.
#[derive(Clone, Debug, PartialEq)]
pub struct CspLdaModel {
    labels: Vec<i32>,
    csp: CspFilters,
    feature_mean: DVector<f64>,
    feature_std: DVector<f64>,
    lda_weights: DVector<f64>,
    lda_intercept: f64,
}

pub fn csp_lda_fit(covs: &[SpdMatrix], labels: &[i32], m_filters: usize) -> Result<CspLdaModel> {
    let csp = csp_fit(covs, labels, m_filters)?;
    let (classes, members) = class_partition(labels)?;
    let feats = covs.iter().map(|c| csp.log_variance(c)).collect::<Result<Vec<_>>>()?;
    let m = m_filters;
    let total = feats.len() as f64;

    let feature_mean = feats.iter().fold(DVector::zeros(m), |a, f| a + f) / total;
    let feature_std = feats
        .iter()
        .fold(DVector::zeros(m), |a: DVector<f64>, f| a + (f - &feature_mean).map(|v| v * v))
        .map(|v| {
            let s = (v / total).sqrt();
            if s > 0.0 { s } else { 1.0 }
        });
    let z: Vec<DVector<f64>> = feats.iter().map(|f| (f - &feature_mean).component_div(&feature_std)).collect();

    let mus: Vec<DVector<f64>> = members
        .iter()
        .map(|idx| idx.iter().fold(DVector::zeros(m), |a, &i| a + &z[i]) / idx.len() as f64)
        .collect();
    let mut pooled = DMatrix::zeros(m, m);
    for (idx, mu) in members.iter().zip(&mus) {
        for &i in idx {
            let r = &z[i] - mu;
            pooled.ger(1.0, &r, &r, 1.0);
        }
    }
    pooled /= (total - 2.0).max(1.0);
    let ridge = 1e-10 * (pooled.trace() / m as f64).max(1e-12);
    for i in 0..m {
        pooled[(i, i)] += ridge;
    }
    let chol = Cholesky::new(pooled).ok_or_else(|| Error::NumericFailure("LDA covariance is singular".into()))?;
    let lda_weights = chol.solve(&(&mus[1] - &mus[0]));
    let prior = (members[1].len() as f64 / members[0].len() as f64).ln();
    let lda_intercept = -lda_weights.dot(&(&mus[0] + &mus[1])) / 2.0 + prior;
    Ok(CspLdaModel { labels: classes, csp, feature_mean, feature_std, lda_weights, lda_intercept })
}

impl CspLdaModel {
    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn csp(&self) -> &CspFilters {
        &self.csp
    }

    pub fn score(&self, cov: &SpdMatrix) -> Result<f64> {
        let z = (self.csp.log_variance(cov)? - &self.feature_mean).component_div(&self.feature_std);
        Ok(self.lda_weights.dot(&z) + self.lda_intercept)
    }

    pub fn predict_proba(&self, cov: &SpdMatrix) -> Result<Vec<f64>> {
        let p1 = 1.0 / (1.0 + (-self.score(cov)?).exp());
        Ok(vec![1.0 - p1, p1])
    }

    pub fn predict(&self, cov: &SpdMatrix) -> Result<Prediction> {
        let score = self.score(cov)?;
        let p1 = 1.0 / (1.0 + (-score).exp());
        let label = if score > 0.0 { self.labels[1] } else { self.labels[0] };
        Ok(Prediction { label, probabilities: vec![1.0 - p1, p1] })
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err("matrix rows have unequal lengths".into());
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

#[derive(Serialize, Deserialize)]
struct RawCspLda {
    labels: Vec<i32>,
    filters: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    feature_mean: Vec<f64>,
    feature_std: Vec<f64>,
    lda_weights: Vec<f64>,
    lda_intercept: f64,
}

impl Serialize for CspLdaModel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawCspLda {
            labels: self.labels.clone(),
            filters: to_rows(&self.csp.filters),
            eigenvalues: self.csp.eigenvalues.clone(),
            feature_mean: self.feature_mean.iter().copied().collect(),
            feature_std: self.feature_std.iter().copied().collect(),
            lda_weights: self.lda_weights.iter().copied().collect(),
            lda_intercept: self.lda_intercept,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CspLdaModel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawCspLda::deserialize(d)?;
        let filters = from_rows(&raw.filters).map_err(D::Error::custom)?;
        let m = filters.ncols();
        if raw.labels.len() != 2
            || m % 2 != 0
            || m > filters.nrows()
            || [raw.eigenvalues.len(), raw.feature_mean.len(), raw.feature_std.len(), raw.lda_weights.len()]
                .iter()
                .any(|&len| len != m)
        {
            return Err(D::Error::custom("inconsistent CSP+LDA model dimensions"));
        }
        Ok(CspLdaModel {
            labels: raw.labels,
            csp: CspFilters { filters, eigenvalues: raw.eigenvalues },
            feature_mean: DVector::from_vec(raw.feature_mean),
            feature_std: DVector::from_vec(raw.feature_std),
            lda_weights: DVector::from_vec(raw.lda_weights),
            lda_intercept: raw.lda_intercept,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn scaled_diag(rng: &mut ChaCha8Rng, base: &[f64]) -> SpdMatrix {
        let d: Vec<f64> = base.iter().map(|b| b * rng.random_range(0.8..1.25)).collect();
        SpdMatrix::from_diagonal(&d).unwrap()
    }

    fn off_diagonal_ratio(m: &DMatrix<f64>) -> f64 {
        let diag: f64 = m.diagonal().iter().map(|v| v.abs()).sum();
        let off: f64 = m.iter().map(|v| v.abs()).sum::<f64>() - diag;
        off / diag
    }

    #[test]
    fn axis_aligned_classes_give_axis_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut covs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..30 {
            covs.push(scaled_diag(&mut rng, &[4.0, 1.0, 1.0, 0.25]));
            labels.push(0);
            covs.push(scaled_diag(&mut rng, &[0.25, 1.0, 1.0, 4.0]));
            labels.push(1);
        }
        let f = csp_fit(&covs, &labels, 2).unwrap();
        let w = f.filters();
        // Largest λ favours class 0 variance on axis 0; smallest, axis 3.
        for (col, axis) in [(0, 0), (1, 3)] {
            let c = w.column(col);
            let cosine = c[axis].abs() / c.norm();
            assert!(cosine >= 0.99, "filter {col}: cosine {cosine}");
        }
    }

    #[test]
    fn eigenvalues_in_unit_interval_and_joint_diagonalisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 6;
        let mix = DMatrix::from_fn(n, n, |_, _| { let v: f64 = StandardNormal.sample(&mut rng); v });
        let mut covs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let class = (i % 2) as i32;
            let d = DMatrix::from_fn(n, n, |r, c| {
                if r == c { (if class == 0 { 1.0 + r as f64 } else { 6.0 - r as f64 }) * rng.random_range(0.7..1.3) } else { 0.0 }
            });
            covs.push(SpdMatrix::from_matrix(&mix * d * mix.transpose()).unwrap());
            labels.push(class);
        }
        let f = csp_fit(&covs, &labels, n).unwrap();
        assert!(f.eigenvalues().iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        let w = f.filters();
        for class in 0..2 {
            let idx: Vec<usize> = (0..40).filter(|i| labels[*i] == class).collect();
            let mean = idx.iter().fold(DMatrix::zeros(n, n), |a, &i| a + covs[i].as_matrix()) / idx.len() as f64;
            assert!(off_diagonal_ratio(&(w.transpose() * mean * w)) <= 1e-8);
        }
    }

    #[test]
    fn lda_separates_variance_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut covs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let class = (i % 2) as i32;
            let base = if class == 0 { [2.0, 1.0, 1.0, 0.5] } else { [0.5, 1.0, 1.0, 2.0] };
            covs.push(scaled_diag(&mut rng, &base));
            labels.push(class);
        }
        let m = csp_lda_fit(&covs, &labels, 2).unwrap();
        let correct = covs.iter().zip(&labels).filter(|(c, l)| m.predict(c).unwrap().label == **l).count();
        assert_eq!(correct, 40);
        let back: CspLdaModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn errors() {
        let a = SpdMatrix::identity(3);
        let covs = vec![a.clone(), a.clone(), a.clone()];
        assert!(matches!(csp_fit(&covs, &[0, 1, 2], 2), Err(Error::InvalidInput(_))));
        assert!(csp_fit(&covs, &[0, 1, 1], 3).is_err());
        assert!(csp_fit(&covs, &[0, 1, 1], 4).is_err());
    }
}
