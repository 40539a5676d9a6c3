//! Cross-subject decoding: reuse the model of the source subject whose mean
//! covariance is nearest to the target's.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{argmax_first, ensemble_fit, EnsembleConfig, EnsembleModel, Prediction};
use crate::connectivity::{Estimator, FeatureBundle, FeatureRow};
use crate::error::{Error, Result};
use crate::manifold::{dist_airm, karcher_mean, Metric, Recentering};
use crate::spd::SpdMatrix;

/// Default offset added to distances before inverting them into vote weights.
pub const VOTE_EPS: f64 = 1e-9;

/// A trained source subject.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubjectBundle {
    subject_id: String,
    model: EnsembleModel,
    subject_mean: SpdMatrix,
    metric: Metric,
}

impl SubjectBundle {
    pub fn new(subject_id: impl Into<String>, model: EnsembleModel, subject_mean: SpdMatrix, metric: Metric) -> Result<Self> {
        let dim = model.models().first().map(|m| m.dim());
        if dim.is_some_and(|d| d != subject_mean.dim()) {
            return Err(Error::invalid("subject mean dimension does not match the model"));
        }
        Ok(Self { subject_id: subject_id.into(), model, subject_mean, metric })
    }

    /// Trains the subject's ensemble and takes the AIRM mean of its covariances.
    pub fn fit(subject_id: impl Into<String>, bundle: &FeatureBundle, labels: &[i32], cfg: &EnsembleConfig) -> Result<Self> {
        let mean = subject_mean(bundle.get(Estimator::Cov)?, Metric::Airm)?;
        let model = ensemble_fit(bundle, labels, cfg)?;
        Self::new(subject_id, model, mean, Metric::Airm)
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn model(&self) -> &EnsembleModel {
        &self.model
    }

    pub fn subject_mean(&self) -> &SpdMatrix {
        &self.subject_mean
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }
}

pub fn subject_mean(covs: &[SpdMatrix], metric: Metric) -> Result<SpdMatrix> {
    karcher_mean(covs, metric)
}

/// Distances from the target mean to every source mean, in source order.
pub fn source_distances(target_mean: &SpdMatrix, sources: &[SubjectBundle]) -> Result<Vec<f64>> {
    if sources.is_empty() {
        return Err(Error::invalid("no source subjects"));
    }
    sources.iter().map(|s| dist_airm(target_mean, &s.subject_mean)).collect()
}

/// Index of the source whose mean is AIRM-closest; the earlier source wins ties.
pub fn select_source(target_mean: &SpdMatrix, sources: &[SubjectBundle]) -> Result<usize> {
    let d = source_distances(target_mean, sources)?;
    let mut best = 0;
    for (i, v) in d.iter().enumerate().skip(1) {
        if *v < d[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Applies one congruence map to every estimator's matrices.
pub fn recenter_bundle(bundle: &FeatureBundle, map: &Recentering, estimators: &[Estimator]) -> Result<FeatureBundle> {
    bundle.map_matrices(|e, x| if estimators.contains(&e) { map.apply(x) } else { Ok(x.clone()) })
}

/// Moves the target onto a source's mean and predicts with its model.
fn predict_with_source(target: &FeatureBundle, target_mean: &SpdMatrix, source: &SubjectBundle) -> Result<Vec<Prediction>> {
    let map = Recentering::new(&source.subject_mean, target_mean)?;
    let moved = recenter_bundle(target, &map, &target.estimators())?;
    source.model.predict_bundle(&moved)
}

pub fn transfer_predict(target: &FeatureBundle, target_mean: &SpdMatrix, sources: &[SubjectBundle]) -> Result<Vec<Prediction>> {
    let k = select_source(target_mean, sources)?;
    predict_with_source(target, target_mean, &sources[k])
}

/// Normalised inverse-distance weights `1/(d + eps_d)`.
pub fn vote_weights(distances: &[f64], eps_d: f64) -> Result<Vec<f64>> {
    if !(eps_d > 0.0) {
        return Err(Error::invalid("eps_d must be positive"));
    }
    let raw: Vec<f64> = distances.iter().map(|d| 1.0 / (d + eps_d)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.iter().map(|w| w / total).collect())
}

/// Every source votes with its probabilities, weighted by inverse mean distance.
pub fn weighted_vote_predict(
    row: &FeatureRow,
    target_mean: &SpdMatrix,
    sources: &[SubjectBundle],
    eps_d: f64,
) -> Result<Prediction> {
    let weights = vote_weights(&source_distances(target_mean, sources)?, eps_d)?;
    let labels = sources[0].model.labels();
    if sources.iter().any(|s| s.model.labels() != labels) {
        return Err(Error::invalid("source models disagree on class labels"));
    }
    let per_source = sources
        .par_iter()
        .map(|s| {
            let map = Recentering::new(&s.subject_mean, target_mean)?;
            let moved: FeatureRow = row.iter().map(|(e, x)| Ok((*e, map.apply(x)?))).collect::<Result<_>>()?;
            Ok(s.model.predict(&moved)?.probabilities)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let mut probabilities = vec![0.0; labels.len()];
    for (w, p) in weights.iter().zip(&per_source) {
        for (acc, v) in probabilities.iter_mut().zip(p) {
            *acc += w * v;
        }
    }
    Ok(Prediction { label: labels[argmax_first(&probabilities)], probabilities })
}
