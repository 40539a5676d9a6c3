use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_lengths, class_partition, fgmdm_fit, ridge_fit, FgmdmModel, Prediction, RidgeModel};
use crate::connectivity::{Estimator, FeatureBundle, FeatureRow};
use crate::error::{Error, Result};
use crate::eval::stratified_fold_ids;
use crate::manifold::{mean_airm, MeanOptions, Metric};
use crate::spd::SpdMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub metric: Metric,
    pub fgda_lambda: f64,
    pub ridge_alpha: f64,
    /// Folds used to produce the out-of-fold probabilities the stacker is trained on.
    pub inner_folds: usize,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { metric: Metric::LogEuclidean, fgda_lambda: 0.1, ridge_alpha: 1.0, inner_folds: 5, seed: 0 }
    }
}

/// One FgMDM per estimator, stacked by a ridge classifier on their probabilities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleModel {
    labels: Vec<i32>,
    estimators: Vec<Estimator>,
    models: Vec<FgmdmModel>,
    stacker: RidgeModel,
    /// AIRM mean of the training covariance matrices, when Cov is an input.
    reference_mean: Option<SpdMatrix>,
}

/// Fits with seeded stratified inner folds.
pub fn ensemble_fit(bundle: &FeatureBundle, labels: &[i32], cfg: &EnsembleConfig) -> Result<EnsembleModel> {
    check_lengths(bundle.n_trials(), labels.len())?;
    let (_, members) = class_partition(labels)?;
    let smallest = members.iter().map(Vec::len).min().unwrap_or(0);
    if smallest < 3 {
        return Err(Error::invalid(
            "ensemble needs at least three trials per class for out-of-fold stacking",
        ));
    }
    if cfg.inner_folds < 2 {
        return Err(Error::invalid("inner_folds must be at least 2"));
    }
    let folds = stratified_fold_ids(labels, cfg.inner_folds.min(smallest), cfg.seed)?;
    ensemble_fit_with_folds(bundle, labels, cfg, &folds)
}

/// Fits with explicit inner fold assignments (`folds[i]` is trial i's fold).
pub fn ensemble_fit_with_folds(
    bundle: &FeatureBundle,
    labels: &[i32],
    cfg: &EnsembleConfig,
    folds: &[usize],
) -> Result<EnsembleModel> {
    check_lengths(bundle.n_trials(), labels.len())?;
    if folds.len() != labels.len() {
        return Err(Error::invalid("fold assignment length does not match trial count"));
    }
    let (classes, _) = class_partition(labels)?;
    if classes.len() != 2 {
        return Err(Error::invalid(format!(
            "the stacked ensemble is binary, found {} classes",
            classes.len()
        )));
    }
    let estimators = bundle.estimators();
    let n_folds = folds.iter().max().map_or(0, |m| m + 1);
    if n_folds < 2 {
        return Err(Error::invalid("need at least two inner folds"));
    }

    let per_fold: Vec<(Vec<usize>, Vec<Vec<f64>>)> = (0..n_folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] == f).collect();
            let train_labels: Vec<i32> = train.iter().map(|&i| labels[i]).collect();
            let mut rows = vec![Vec::with_capacity(2 * estimators.len()); test.len()];
            for &est in &estimators {
                let mats = bundle.get(est)?;
                let train_mats: Vec<SpdMatrix> = train.iter().map(|&i| mats[i].clone()).collect();
                let model = fgmdm_fit(&train_mats, &train_labels, cfg.metric, cfg.fgda_lambda)?;
                if model.labels() != classes.as_slice() {
                    return Err(Error::invalid(format!("inner fold {f} is missing a class")));
                }
                for (row, &i) in rows.iter_mut().zip(&test) {
                    row.extend(model.predict_proba(&mats[i])?);
                }
            }
            Ok((test, rows))
        })
        .collect::<Result<_>>()?;

    let width = 2 * estimators.len();
    let mut level_one = DMatrix::zeros(labels.len(), width);
    for (test, rows) in per_fold {
        for (i, row) in test.into_iter().zip(rows) {
            level_one.row_mut(i).copy_from_slice(&row);
        }
    }
    let targets: Vec<f64> = labels.iter().map(|&l| if l == classes[1] { 1.0 } else { -1.0 }).collect();
    let stacker = ridge_fit(&level_one, &targets, cfg.ridge_alpha)?;

    let models = estimators
        .par_iter()
        .map(|&est| fgmdm_fit(bundle.get(est)?, labels, cfg.metric, cfg.fgda_lambda))
        .collect::<Result<Vec<_>>>()?;
    let reference_mean = match bundle.get(Estimator::Cov) {
        Ok(covs) => Some(mean_airm(covs, MeanOptions::default())?),
        Err(_) => None,
    };
    Ok(EnsembleModel { labels: classes, estimators, models, stacker, reference_mean })
}

pub fn ensemble_predict(model: &EnsembleModel, row: &FeatureRow) -> Result<Prediction> {
    model.predict(row)
}

impl EnsembleModel {
    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn estimators(&self) -> &[Estimator] {
        &self.estimators
    }

    pub fn models(&self) -> &[FgmdmModel] {
        &self.models
    }

    pub fn stacker(&self) -> &RidgeModel {
        &self.stacker
    }

    pub fn reference_mean(&self) -> Option<&SpdMatrix> {
        self.reference_mean.as_ref()
    }

    /// Concatenated level-one probabilities in canonical estimator order.
    pub fn level_one(&self, row: &FeatureRow) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(2 * self.models.len());
        for (est, model) in self.estimators.iter().zip(&self.models) {
            let x = row
                .get(est)
                .ok_or_else(|| Error::invalid(format!("input has no {est} features")))?;
            out.extend(model.predict_proba(x)?);
        }
        Ok(out)
    }

    /// Ridge score `s` mapped to probabilities by a softmax over `(−s, s)`.
    pub fn predict(&self, row: &FeatureRow) -> Result<Prediction> {
        let score = self.stacker.score(&self.level_one(row)?)?;
        let p1 = 1.0 / (1.0 + (-2.0 * score).exp());
        let label = if score > 0.0 { self.labels[1] } else { self.labels[0] };
        Ok(Prediction { label, probabilities: vec![1.0 - p1, p1] })
    }

    pub fn predict_bundle(&self, bundle: &FeatureBundle) -> Result<Vec<Prediction>> {
        (0..bundle.n_trials()).into_par_iter().map(|i| self.predict(&bundle.row(i))).collect()
    }
}
