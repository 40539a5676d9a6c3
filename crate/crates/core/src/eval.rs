//! Scores, cross-validation splits and the evaluation protocols.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{csp_lda_fit, ensemble_fit, fgmdm_fit, CspLdaModel, EnsembleConfig, EnsembleModel, FgmdmModel};
use crate::connectivity::{Estimator, FeatureBundle};
use crate::error::{Error, Result};
use crate::manifold::{mean_airm, MeanOptions, Metric, Recentering};
use crate::spd::SpdMatrix;
use crate::transfer::{recenter_bundle, select_source, source_distances, subject_mean, SubjectBundle};

fn check_pair(y_true: &[i32], y_pred: &[i32]) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "label vectors differ in length ({} vs {})",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("empty label vectors"));
    }
    Ok(())
}

/// Cohen's kappa. When chance agreement is 1 the ratio is 0/0; it is taken
/// as 1 for identical vectors and 0 otherwise.
pub fn cohen_kappa(y_true: &[i32], y_pred: &[i32]) -> Result<f64> {
    check_pair(y_true, y_pred)?;
    let n = y_true.len() as f64;
    let mut t: BTreeMap<i32, f64> = BTreeMap::new();
    let mut p: BTreeMap<i32, f64> = BTreeMap::new();
    let mut agree = 0.0;
    for (a, b) in y_true.iter().zip(y_pred) {
        *t.entry(*a).or_default() += 1.0;
        *p.entry(*b).or_default() += 1.0;
        if a == b {
            agree += 1.0;
        }
    }
    let p_o = agree / n;
    let p_e: f64 = t.iter().map(|(k, c)| c * p.get(k).copied().unwrap_or(0.0)).sum::<f64>() / (n * n);
    if p_e >= 1.0 {
        return Ok(if y_true == y_pred { 1.0 } else { 0.0 });
    }
    Ok(((p_o - p_e) / (1.0 - p_e)).clamp(-1.0, 1.0))
}

pub fn accuracy(y_true: &[i32], y_pred: &[i32]) -> Result<f64> {
    check_pair(y_true, y_pred)?;
    Ok(y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count() as f64 / y_true.len() as f64)
}

fn repeat_rng(seed: u64, repeat: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repeat as u64);
    rng
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// continuing where the previous class stopped so fold sizes stay balanced.
fn deal_folds(labels: &[i32], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut classes: Vec<i32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(rng);
        for i in idx {
            folds[i] = next % k;
            next += 1;
        }
    }
    folds
}

fn check_stratifiable(labels: &[i32], k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid("need at least two folds"));
    }
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(*l).or_default() += 1;
    }
    if let Some((c, n)) = counts.iter().find(|(_, n)| **n < k) {
        return Err(Error::invalid(format!("class {c} has {n} members, fewer than {k} folds")));
    }
    Ok(())
}

/// Seeded stratified fold index per sample.
pub fn stratified_fold_ids(labels: &[i32], k: usize, seed: u64) -> Result<Vec<usize>> {
    check_stratifiable(labels, k)?;
    Ok(deal_folds(labels, k, &mut repeat_rng(seed, 0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub repeat: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub folds: Vec<Fold>,
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub stratified: bool,
}

/// Repeated k-fold splits over `n` samples, stratified when labels are given.
pub fn make_splits(n: usize, labels: Option<&[i32]>, k: usize, repeats: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::invalid("need at least two folds"));
    }
    if n < k {
        return Err(Error::invalid(format!("{n} samples cannot fill {k} folds")));
    }
    if repeats == 0 {
        return Err(Error::invalid("need at least one repeat"));
    }
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::invalid("label count does not match sample count"));
        }
        check_stratifiable(l, k)?;
    }
    let mut folds = Vec::with_capacity(k * repeats);
    for repeat in 0..repeats {
        let mut rng = repeat_rng(seed, repeat);
        let assign = match labels {
            Some(l) => deal_folds(l, k, &mut rng),
            None => deal_folds(&vec![0; n], k, &mut rng),
        };
        for f in 0..k {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assign[i] == f);
            folds.push(Fold { repeat, train, test });
        }
    }
    Ok(SplitPlan { folds, k, repeats, seed, stratified: labels.is_some() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub pipeline: String,
    pub seed: u64,
    pub config_hash: Option<String>,
    pub fold_kappa: Vec<f64>,
    pub fold_accuracy: Vec<f64>,
    pub mean_kappa: f64,
    pub std_kappa: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

impl ScoreReport {
    pub fn from_folds(pipeline: impl Into<String>, seed: u64, fold_kappa: Vec<f64>, fold_accuracy: Vec<f64>) -> Self {
        let (mean_kappa, std_kappa) = mean_std(&fold_kappa);
        let (mean_accuracy, std_accuracy) = mean_std(&fold_accuracy);
        Self {
            pipeline: pipeline.into(),
            seed,
            config_hash: None,
            fold_kappa,
            fold_accuracy,
            mean_kappa,
            std_kappa,
            mean_accuracy,
            std_accuracy,
        }
    }

    pub fn with_config_hash(mut self, hash: impl Into<String>) -> Self {
        self.config_hash = Some(hash.into());
        self
    }
}

/// A trainable classifier over feature bundles.
pub trait Pipeline: Sync {
    fn name(&self) -> String;
    /// Fits on training trials only; `seed` is private to the fold.
    fn fit(&self, train: &FeatureBundle, labels: &[i32], seed: u64) -> Result<Box<dyn Fitted>>;
}

pub trait Fitted: Send + Sync {
    fn predict(&self, test: &FeatureBundle) -> Result<Vec<i32>>;
}

/// FgMDM on a single estimator.
#[derive(Clone, Debug)]
pub struct FgmdmPipeline {
    pub estimator: Estimator,
    pub metric: Metric,
    pub lambda: f64,
}

struct FittedFgmdm(Estimator, FgmdmModel);

impl Fitted for FittedFgmdm {
    fn predict(&self, test: &FeatureBundle) -> Result<Vec<i32>> {
        test.get(self.0)?.iter().map(|x| Ok(self.1.predict(x)?.label)).collect()
    }
}

impl Pipeline for FgmdmPipeline {
    fn name(&self) -> String {
        format!("FgMDM-{}", self.estimator)
    }

    fn fit(&self, train: &FeatureBundle, labels: &[i32], _seed: u64) -> Result<Box<dyn Fitted>> {
        let model = fgmdm_fit(train.get(self.estimator)?, labels, self.metric, self.lambda)?;
        Ok(Box::new(FittedFgmdm(self.estimator, model)))
    }
}

/// CSP + LDA on the covariance features.
#[derive(Clone, Debug)]
pub struct CspLdaPipeline {
    pub filters: usize,
}

struct FittedCspLda(CspLdaModel);

impl Fitted for FittedCspLda {
    fn predict(&self, test: &FeatureBundle) -> Result<Vec<i32>> {
        test.get(Estimator::Cov)?.iter().map(|x| Ok(self.0.predict(x)?.label)).collect()
    }
}

impl Pipeline for CspLdaPipeline {
    fn name(&self) -> String {
        "CSP+LDA".into()
    }

    fn fit(&self, train: &FeatureBundle, labels: &[i32], _seed: u64) -> Result<Box<dyn Fitted>> {
        let n = train.get(Estimator::Cov)?.first().map_or(0, SpdMatrix::dim);
        // Small montages cannot host the full filter count.
        let m = self.filters.min(n - n % 2);
        Ok(Box::new(FittedCspLda(csp_lda_fit(train.get(Estimator::Cov)?, labels, m)?)))
    }
}

/// The stacked ensemble over a set of estimators.
#[derive(Clone, Debug)]
pub struct EnsemblePipeline {
    pub estimators: Vec<Estimator>,
    pub config: EnsembleConfig,
}

struct FittedEnsemble(EnsembleModel);

impl Fitted for FittedEnsemble {
    fn predict(&self, test: &FeatureBundle) -> Result<Vec<i32>> {
        Ok(self.0.predict_bundle(test)?.into_iter().map(|p| p.label).collect())
    }
}

impl Pipeline for EnsemblePipeline {
    fn name(&self) -> String {
        "Ensemble".into()
    }

    fn fit(&self, train: &FeatureBundle, labels: &[i32], seed: u64) -> Result<Box<dyn Fitted>> {
        let cfg = EnsembleConfig { seed, ..self.config.clone() };
        Ok(Box::new(FittedEnsemble(ensemble_fit(&train.select(&self.estimators)?, labels, &cfg)?)))
    }
}

/// Moves the test covariances so their AIRM mean lands on the training mean.
pub fn transport_covariances(train: &FeatureBundle, test: &FeatureBundle) -> Result<FeatureBundle> {
    let (Ok(tr), Ok(te)) = (train.get(Estimator::Cov), test.get(Estimator::Cov)) else {
        return Ok(test.clone());
    };
    let map = Recentering::new(&mean_airm(tr, MeanOptions::default())?, &mean_airm(te, MeanOptions::default())?)?;
    recenter_bundle(test, &map, &[Estimator::Cov])
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(fold as u64 + 1)
}

/// Runs every fold of `plan`; a failing fold aborts with its index attached.
pub fn cross_validate(bundle: &FeatureBundle, labels: &[i32], pipeline: &dyn Pipeline, plan: &SplitPlan) -> Result<ScoreReport> {
    if bundle.n_trials() != labels.len() {
        return Err(Error::invalid(format!("{} trials but {} labels", bundle.n_trials(), labels.len())));
    }
    if plan.folds.iter().flat_map(|f| f.train.iter().chain(&f.test)).any(|&i| i >= labels.len()) {
        return Err(Error::invalid("split plan indexes past the end of the data"));
    }
    let scores = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(k, fold)| {
            let run = || -> Result<(f64, f64)> {
                let train = bundle.subset(&fold.train)?;
                let train_labels: Vec<i32> = fold.train.iter().map(|&i| labels[i]).collect();
                let fitted = pipeline.fit(&train, &train_labels, fold_seed(plan.seed, k))?;
                let test = transport_covariances(&train, &bundle.subset(&fold.test)?)?;
                let y_true: Vec<i32> = fold.test.iter().map(|&i| labels[i]).collect();
                let y_pred = fitted.predict(&test)?;
                Ok((cohen_kappa(&y_true, &y_pred)?, accuracy(&y_true, &y_pred)?))
            };
            run().map_err(|e| Error::Fold { fold: k, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    let (kappa, acc) = scores.into_iter().unzip();
    Ok(ScoreReport::from_folds(pipeline.name(), plan.seed, kappa, acc))
}

/// A labelled subject's features.
#[derive(Clone, Debug)]
pub struct SubjectData {
    pub id: String,
    pub bundle: FeatureBundle,
    pub labels: Vec<i32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub subjects: Vec<String>,
    /// `kappa[s][t]`: source `s`'s model on target `t` (diagonal is the
    /// training fit).
    pub kappa: Vec<Vec<f64>>,
    /// AIRM distances between subject mean covariances.
    pub distance: Vec<Vec<f64>>,
    /// Per target, the source selected among the other subjects.
    pub selected: Vec<String>,
    /// Per target, the score of the selected source.
    pub reports: Vec<ScoreReport>,
}

/// Trains one ensemble per subject, scores every source on every target and
/// applies nearest-mean selection with each target held out.
pub fn leave_one_subject_out(subjects: &[SubjectData], cfg: &EnsembleConfig) -> Result<TransferReport> {
    if subjects.len() < 2 {
        return Err(Error::invalid("leave-one-subject-out needs at least two subjects"));
    }
    let trained = subjects
        .par_iter()
        .map(|s| SubjectBundle::fit(s.id.clone(), &s.bundle, &s.labels, cfg))
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<SpdMatrix> = trained.iter().map(|s| s.subject_mean().clone()).collect();

    let n = subjects.len();
    let rows = (0..n)
        .into_par_iter()
        .map(|s| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut kappa = Vec::with_capacity(n);
            for (t, target) in subjects.iter().enumerate() {
                let map = Recentering::new(&means[s], &means[t])?;
                let moved = recenter_bundle(&target.bundle, &map, &target.bundle.estimators())?;
                let pred: Vec<i32> = trained[s].model().predict_bundle(&moved)?.into_iter().map(|p| p.label).collect();
                kappa.push(cohen_kappa(&target.labels, &pred)?);
            }
            Ok((kappa, source_distances(&means[s], &trained)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (kappa, distance): (Vec<_>, Vec<_>) = rows.into_iter().unzip();

    let mut selected = Vec::with_capacity(n);
    let mut reports = Vec::with_capacity(n);
    for t in 0..n {
        let others: Vec<SubjectBundle> = (0..n).filter(|&s| s != t).map(|s| trained[s].clone()).collect();
        let k = select_source(&means[t], &others)?;
        let s = if k < t { k } else { k + 1 };
        selected.push(subjects[s].id.clone());
        let acc = accuracy_of(&trained[s], &subjects[t], &means[t])?;
        reports.push(ScoreReport::from_folds(format!("{}->{}", subjects[s].id, subjects[t].id), cfg.seed, vec![kappa[s][t]], vec![acc]));
    }
    Ok(TransferReport { subjects: subjects.iter().map(|s| s.id.clone()).collect(), kappa, distance, selected, reports })
}

fn accuracy_of(source: &SubjectBundle, target: &SubjectData, target_mean: &SpdMatrix) -> Result<f64> {
    let map = Recentering::new(source.subject_mean(), target_mean)?;
    let moved = recenter_bundle(&target.bundle, &map, &target.bundle.estimators())?;
    let pred: Vec<i32> = source.model().predict_bundle(&moved)?.into_iter().map(|p| p.label).collect();
    accuracy(&target.labels, &pred)
}

/// Mean covariance of a subject, for callers that only need the geometry.
pub fn covariance_mean(bundle: &FeatureBundle) -> Result<SpdMatrix> {
    subject_mean(bundle.get(Estimator::Cov)?, Metric::Airm)
}

/// Display threshold `Min + 0.9·(Max − Min)` over off-diagonal entries, and
/// the mask of entries reaching it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub th: f64,
    pub mask: Vec<Vec<bool>>,
}

pub fn figure_threshold(values: &[Vec<f64>]) -> Result<Threshold> {
    let n = values.len();
    if n == 0 || values.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("threshold needs a non-empty square matrix"));
    }
    let off = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)));
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, j) in off {
        lo = lo.min(values[i][j]);
        hi = hi.max(values[i][j]);
    }
    if n == 1 {
        lo = values[0][0];
        hi = values[0][0];
    }
    let th = lo + 0.9 * (hi - lo);
    let mask = values.iter().map(|r| r.iter().map(|&v| v >= th).collect()).collect();
    Ok(Threshold { th, mask })
}
