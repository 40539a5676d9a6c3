use serde::{Deserialize, Serialize};

use super::{argmax_first, check_lengths, class_partition, Prediction};
use crate::error::{Error, Result};
use crate::manifold::{distance, karcher_mean, Metric};
use crate::spd::SpdMatrix;

/// Minimum distance to mean classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdmModel {
    metric: Metric,
    labels: Vec<i32>,
    class_means: Vec<SpdMatrix>,
}

pub fn mdm_fit(mats: &[SpdMatrix], labels: &[i32], metric: Metric) -> Result<MdmModel> {
    check_lengths(mats.len(), labels.len())?;
    let (classes, members) = class_partition(labels)?;
    let class_means = members
        .iter()
        .map(|idx| {
            let set: Vec<SpdMatrix> = idx.iter().map(|&i| mats[i].clone()).collect();
            karcher_mean(&set, metric)
        })
        .collect::<Result<Vec<_>>>()?;
    MdmModel::from_parts(metric, classes, class_means)
}

impl MdmModel {
    pub fn from_parts(metric: Metric, labels: Vec<i32>, class_means: Vec<SpdMatrix>) -> Result<Self> {
        if labels.len() < 2 || labels.len() != class_means.len() {
            return Err(Error::invalid("MDM needs one mean per class and at least two classes"));
        }
        let n = class_means[0].dim();
        if class_means.iter().any(|m| m.dim() != n) {
            return Err(Error::invalid("class means have different dimensions"));
        }
        Ok(Self { metric, labels, class_means })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn class_means(&self) -> &[SpdMatrix] {
        &self.class_means
    }

    pub fn dim(&self) -> usize {
        self.class_means[0].dim()
    }

    pub fn distances(&self, x: &SpdMatrix) -> Result<Vec<f64>> {
        self.class_means.iter().map(|m| distance(self.metric, m, x)).collect()
    }

    pub fn predict_proba(&self, x: &SpdMatrix) -> Result<Vec<f64>> {
        Ok(softmax_neg(&self.distances(x)?))
    }

    pub fn predict(&self, x: &SpdMatrix) -> Result<Prediction> {
        let probabilities = self.predict_proba(x)?;
        Ok(Prediction { label: self.labels[argmax_first(&probabilities)], probabilities })
    }
}

pub fn mdm_predict_proba(m: &MdmModel, x: &SpdMatrix) -> Result<Vec<f64>> {
    m.predict_proba(x)
}

/// `pᵢ = exp(−dᵢ) / Σⱼ exp(−dⱼ)`, shifted by the smallest distance for stability.
pub fn softmax_neg(distances: &[f64]) -> Vec<f64> {
    let d_min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = distances.iter().map(|d| (d_min - d).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}
