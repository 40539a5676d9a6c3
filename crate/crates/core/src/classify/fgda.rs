use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{check_lengths, class_partition, mdm_fit, MdmModel, Prediction};
use crate::error::{Error, Result};
use crate::manifold::{karcher_mean, Metric, TangentSpace, TangentVector};
use crate::spd::{sym_eig, SpdMatrix, SymmetricMatrix};

const IDEMPOTENCE_TOL: f64 = 1e-8;

/// Fisher geodesic discriminant filter: an orthogonal projection of tangent
/// coordinates at the grand mean onto the discriminant subspace.
#[derive(Clone, Debug)]
pub struct FgdaFilter {
    space: TangentSpace,
    projection: DMatrix<f64>,
    lambda: f64,
}

pub fn fgda_fit(mats: &[SpdMatrix], labels: &[i32], lambda: f64, metric: Metric) -> Result<FgdaFilter> {
    check_lengths(mats.len(), labels.len())?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid(format!("FGDA shrinkage must be >= 0, got {lambda}")));
    }
    let (classes, members) = class_partition(labels)?;
    if let Some(c) = members.iter().position(|m| m.len() < 2) {
        return Err(Error::invalid(format!("class {} has fewer than two samples", classes[c])));
    }

    let space = TangentSpace::new(karcher_mean(mats, metric)?);
    let d = space.dim();
    let tangents = mats
        .iter()
        .map(|x| space.map(x).map(TangentVector::into_coords))
        .collect::<Result<Vec<_>>>()?;

    let overall = tangents.iter().fold(DVector::zeros(d), |acc, t| acc + t) / tangents.len() as f64;
    let mut s_w = DMatrix::zeros(d, d);
    let mut s_b = DMatrix::zeros(d, d);
    for idx in &members {
        let mu = idx.iter().fold(DVector::zeros(d), |acc, &i| acc + &tangents[i]) / idx.len() as f64;
        for &i in idx {
            let r = &tangents[i] - &mu;
            s_w.ger(1.0, &r, &r, 1.0);
        }
        let r = &mu - &overall;
        s_b.ger(idx.len() as f64, &r, &r, 1.0);
    }

    let scale = s_w.trace() / d as f64;
    if !(scale > 0.0) {
        return Err(Error::NumericFailure("within-class scatter is zero".into()));
    }
    for i in 0..d {
        s_w[(i, i)] += lambda * scale;
    }
    let chol = Cholesky::new(s_w)
        .ok_or_else(|| Error::NumericFailure("regularized within-class scatter is singular; raise lambda".into()))?;

    // Reduce S_b w = ρ S_w w to a symmetric problem with L⁻¹ S_b L⁻ᵀ.
    let l = chol.l();
    let l_inv_sb = l
        .solve_lower_triangular(&s_b)
        .ok_or_else(|| Error::NumericFailure("triangular solve failed".into()))?;
    let reduced = l
        .solve_lower_triangular(&l_inv_sb.transpose())
        .ok_or_else(|| Error::NumericFailure("triangular solve failed".into()))?;
    let eig = sym_eig(&SymmetricMatrix::from_symmetric_part(reduced)?)?;

    let k = classes.len() - 1;
    let top = eig.vectors.columns(d - k, k).into_owned();
    let w = l
        .transpose()
        .solve_upper_triangular(&top)
        .ok_or_else(|| Error::NumericFailure("triangular solve failed".into()))?;
    let q = w.qr().q();
    let projection = &q * q.transpose();
    Ok(FgdaFilter { space, projection, lambda })
}

impl FgdaFilter {
    /// Rebuilds a filter from stored parts, checking that the projection is
    /// symmetric and idempotent.
    pub fn from_parts(base_point: SpdMatrix, projection: DMatrix<f64>, lambda: f64) -> Result<Self> {
        let space = TangentSpace::new(base_point);
        let d = space.dim();
        if projection.shape() != (d, d) {
            return Err(Error::invalid(format!(
                "projection is {}x{}, expected {d}x{d}",
                projection.nrows(),
                projection.ncols()
            )));
        }
        if projection.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("projection has non-finite entries"));
        }
        let scale = projection.norm().max(1.0);
        if (&projection * &projection - &projection).amax() > IDEMPOTENCE_TOL * scale
            || (&projection - projection.transpose()).amax() > IDEMPOTENCE_TOL * scale
        {
            return Err(Error::invalid("projection is not a symmetric idempotent matrix"));
        }
        Ok(Self { space, projection, lambda })
    }

    pub fn base_point(&self) -> &SpdMatrix {
        self.space.base()
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Rank of the projection, read off its trace.
    pub fn rank(&self) -> usize {
        self.projection.trace().round() as usize
    }

    pub fn dim(&self) -> usize {
        self.space.base().dim()
    }

    pub fn apply(&self, x: &SpdMatrix) -> Result<SpdMatrix> {
        let t = self.space.map(x)?;
        let n = t.base_dim();
        self.space.unmap(&TangentVector::new(n, &self.projection * t.into_coords())?)
    }
}

pub fn fgda_apply(f: &FgdaFilter, x: &SpdMatrix) -> Result<SpdMatrix> {
    f.apply(x)
}

#[derive(Serialize, Deserialize)]
struct RawFgda {
    base_point: SpdMatrix,
    projection: Vec<Vec<f64>>,
    lambda: f64,
}

impl Serialize for FgdaFilter {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let projection = self.projection.row_iter().map(|r| r.iter().copied().collect()).collect();
        RawFgda { base_point: self.space.base().clone(), projection, lambda: self.lambda }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FgdaFilter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawFgda::deserialize(d)?;
        let n = raw.projection.len();
        if raw.projection.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("projection rows have unequal lengths"));
        }
        let m = DMatrix::from_fn(n, n, |i, j| raw.projection[i][j]);
        FgdaFilter::from_parts(raw.base_point, m, raw.lambda).map_err(serde::de::Error::custom)
    }
}

/// FGDA filtering followed by minimum distance to mean.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FgmdmModel {
    filter: FgdaFilter,
    mdm: MdmModel,
}

pub fn fgmdm_fit(mats: &[SpdMatrix], labels: &[i32], metric: Metric, lambda: f64) -> Result<FgmdmModel> {
    let filter = fgda_fit(mats, labels, lambda, metric)?;
    let filtered = mats.iter().map(|x| filter.apply(x)).collect::<Result<Vec<_>>>()?;
    let mdm = mdm_fit(&filtered, labels, metric)?;
    Ok(FgmdmModel { filter, mdm })
}

pub fn fgmdm_predict_proba(model: &FgmdmModel, x: &SpdMatrix) -> Result<Vec<f64>> {
    model.predict_proba(x)
}

impl FgmdmModel {
    pub fn from_parts(filter: FgdaFilter, mdm: MdmModel) -> Result<Self> {
        if filter.dim() != mdm.dim() {
            return Err(Error::invalid("filter and MDM dimensions differ"));
        }
        Ok(Self { filter, mdm })
    }

    pub fn filter(&self) -> &FgdaFilter {
        &self.filter
    }

    pub fn mdm(&self) -> &MdmModel {
        &self.mdm
    }

    pub fn labels(&self) -> &[i32] {
        self.mdm.labels()
    }

    pub fn dim(&self) -> usize {
        self.mdm.dim()
    }

    pub fn predict_proba(&self, x: &SpdMatrix) -> Result<Vec<f64>> {
        self.mdm.predict_proba(&self.filter.apply(x)?)
    }

    pub fn predict(&self, x: &SpdMatrix) -> Result<Prediction> {
        self.mdm.predict(&self.filter.apply(x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::matrix_exp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Points exp(±a·axis + noise) around the identity, with `axis` a unit
    /// vector in tangent coordinates.
    fn axis_data(seed: u64, n: usize, per_class: usize, a: f64, sigma: f64) -> (Vec<SpdMatrix>, Vec<i32>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = n * (n + 1) / 2;
        let mut axis = DVector::from_fn(d, |_, _| { let v: f64 = StandardNormal.sample(&mut rng); v });
        axis.normalize_mut();
        let mut mats = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            let sign = if c == 0 { -1.0 } else { 1.0 };
            for _ in 0..per_class {
                let noise = DVector::from_fn(d, |_, _| sigma * { let v: f64 = StandardNormal.sample(&mut rng); v });
                let t = TangentVector::new(n, &axis * (sign * a) + noise).unwrap();
                mats.push(matrix_exp(&SymmetricMatrix::from_symmetric_part(t.to_symmetric()).unwrap()).unwrap());
                labels.push(c);
            }
        }
        (mats, labels, axis)
    }

    #[test]
    fn recovers_generative_axis() {
        let (mats, labels, axis) = axis_data(11, 3, 1000, 0.2, 0.04);
        let f = fgda_fit(&mats, &labels, 0.1, Metric::LogEuclidean).unwrap();
        assert_eq!(f.rank(), 1);
        let p = f.projection();
        assert!((p * p - p).amax() < 1e-8);
        // Range of a rank-one projection is P·axis / |P·axis|; compare against the axis.
        let image = p * &axis;
        let cosine = image.dot(&axis) / image.norm();
        assert!(cosine >= 0.99, "cosine {cosine}");
    }

    #[test]
    fn apply_fixes_base_and_is_idempotent() {
        let (mats, labels, _) = axis_data(12, 3, 30, 0.4, 0.2);
        let f = fgda_fit(&mats, &labels, 0.1, Metric::Airm).unwrap();
        assert_eq!(&f.apply(f.base_point()).unwrap(), f.base_point());
        for x in &mats[..10] {
            let once = f.apply(x).unwrap();
            let twice = f.apply(&once).unwrap();
            assert!((once.as_matrix() - twice.as_matrix()).amax() < 1e-8);
        }
    }

    #[test]
    fn full_projection_recovers_input() {
        let (mats, _, _) = axis_data(13, 3, 5, 0.4, 0.2);
        let f = FgdaFilter::from_parts(SpdMatrix::identity(3), DMatrix::identity(6, 6), 0.0).unwrap();
        for x in &mats {
            assert!((f.apply(x).unwrap().as_matrix() - x.as_matrix()).amax() < 1e-8);
        }
    }

    #[test]
    fn from_parts_rejects_non_projection() {
        let mut p = DMatrix::identity(6, 6);
        p[(0, 0)] = 0.5;
        assert!(FgdaFilter::from_parts(SpdMatrix::identity(3), p, 0.1).is_err());
        assert!(FgdaFilter::from_parts(SpdMatrix::identity(3), DMatrix::identity(5, 5), 0.1).is_err());
    }

    #[test]
    fn degenerate_scatter_is_numeric_failure() {
        let a = SpdMatrix::from_diagonal(&[1.0, 2.0]).unwrap();
        let b = SpdMatrix::from_diagonal(&[2.0, 1.0]).unwrap();
        let err = fgda_fit(&[a.clone(), a, b.clone(), b], &[0, 0, 1, 1], 0.1, Metric::Airm).unwrap_err();
        assert!(matches!(err, Error::NumericFailure(_)));
    }

    #[test]
    fn needs_two_samples_per_class() {
        let (mats, _, _) = axis_data(14, 3, 2, 0.4, 0.2);
        assert!(fgda_fit(&mats[..3], &[0, 0, 1], 0.1, Metric::Airm).is_err());
    }

    #[test]
    fn fgmdm_probabilities_and_means() {
        let (mats, labels, _) = axis_data(15, 4, 40, 0.5, 0.15);
        let m = fgmdm_fit(&mats, &labels, Metric::LogEuclidean, 0.1).unwrap();
        for x in &mats[..5] {
            let p = m.predict_proba(x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for (c, mean) in m.mdm().class_means().iter().enumerate() {
            assert_eq!(m.predict(mean).unwrap().label, c as i32);
        }
    }

    #[test]
    fn serde_round_trip_keeps_predictions() {
        let (mats, labels, _) = axis_data(16, 3, 20, 0.4, 0.2);
        let m = fgmdm_fit(&mats, &labels, Metric::Airm, 0.1).unwrap();
        let back: FgmdmModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        for x in &mats {
            assert_eq!(m.predict_proba(x).unwrap(), back.predict_proba(x).unwrap());
        }
    }
}
