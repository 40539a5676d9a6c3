use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::epochs::{sample_covariance, window_epochs, EpochSet};
use super::phase::{aec_trial, plv_trial, Coupling};
use super::spectral::{band_average, coherence, cross_spectral_density, imaginary_coherence, Taper, WelchParams};
use crate::error::{Error, Result};
use crate::spd::{nearest_spd, shrink_covariance, SpdMatrix, SymmetricMatrix};

/// Feature estimators, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Estimator {
    Cov,
    Coh,
    ICoh,
    #[serde(rename = "PLV")]
    Plv,
    #[serde(rename = "AEC")]
    Aec,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Cov,
        Estimator::Coh,
        Estimator::ICoh,
        Estimator::Plv,
        Estimator::Aec,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Cov => "Cov",
            Estimator::Coh => "Coh",
            Estimator::ICoh => "ICoh",
            Estimator::Plv => "PLV",
            Estimator::Aec => "AEC",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown estimator '{s}'")))
    }
}

/// Band-averaged coupling matrix of one trial, before projection onto the SPD cone.
#[derive(Clone, Debug)]
pub struct ConnectivityMatrix {
    pub estimator: Estimator,
    pub values: SymmetricMatrix,
    pub band_hz: (f64, f64),
    pub flagged: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WelchConfig {
    pub segment_s: f64,
    pub overlap: f64,
    pub taper: Taper,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self { segment_s: 1.0, overlap: 0.5, taper: Taper::Hann }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Analysis window in seconds; `None` keeps whole epochs.
    pub window_s: Option<(f64, f64)>,
    pub band_hz: (f64, f64),
    pub welch: WelchConfig,
    /// Covariance shrinkage intensity in `[0, 1]`.
    pub shrinkage: f64,
    /// Samples trimmed from both ends before PLV/AEC statistics, in seconds.
    pub edge_s: f64,
    /// Eigenvalue floor for projected connectivity matrices, relative to the mean diagonal.
    pub fc_floor: f64,
    /// Smallest accepted covariance eigenvalue, relative to the mean diagonal.
    pub cov_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window_s: Some((3.0, 7.5)),
            band_hz: (8.0, 30.0),
            welch: WelchConfig::default(),
            shrinkage: 0.0,
            edge_s: 0.25,
            fc_floor: 1e-6,
            cov_floor: 1e-10,
        }
    }
}

fn edge_samples(edge_s: f64, fs_hz: f64) -> usize {
    (edge_s * fs_hz).round().max(0.0) as usize
}

fn coupling_matrices(
    e: &EpochSet,
    band: (f64, f64),
    edge_s: f64,
    estimator: Estimator,
    f: fn(&DMatrix<f64>, f64, (f64, f64), usize) -> Result<Coupling>,
) -> Result<Vec<ConnectivityMatrix>> {
    let edge = edge_samples(edge_s, e.fs_hz());
    e.trials()
        .par_iter()
        .map(|t| {
            let c = f(t, e.fs_hz(), band, edge)?;
            Ok(ConnectivityMatrix {
                estimator,
                values: SymmetricMatrix::from_symmetric_part(c.values)?,
                band_hz: band,
                flagged: c.flagged,
            })
        })
        .collect()
}

/// Per-trial phase locking value matrices.
pub fn plv(e: &EpochSet, band: (f64, f64), edge_s: f64) -> Result<Vec<ConnectivityMatrix>> {
    coupling_matrices(e, band, edge_s, Estimator::Plv, plv_trial)
}

/// Per-trial amplitude envelope correlation matrices.
pub fn aec(e: &EpochSet, band: (f64, f64), edge_s: f64) -> Result<Vec<ConnectivityMatrix>> {
    coupling_matrices(e, band, edge_s, Estimator::Aec, aec_trial)
}

/// Per-trial SPD feature matrices keyed by estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBundle", into = "RawBundle")]
pub struct FeatureBundle {
    features: BTreeMap<Estimator, Vec<SpdMatrix>>,
    trial_ids: Vec<usize>,
    flagged: BTreeMap<Estimator, usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBundle {
    trial_ids: Vec<usize>,
    flagged: BTreeMap<Estimator, usize>,
    features: BTreeMap<Estimator, Vec<SpdMatrix>>,
}

impl TryFrom<RawBundle> for FeatureBundle {
    type Error = Error;

    fn try_from(raw: RawBundle) -> Result<Self> {
        let mut b = FeatureBundle::new(raw.features)?;
        if raw.trial_ids.len() != b.n_trials() {
            return Err(Error::invalid("trial id count does not match feature count"));
        }
        b.trial_ids = raw.trial_ids;
        b.flagged = raw.flagged;
        Ok(b)
    }
}

impl From<FeatureBundle> for RawBundle {
    fn from(b: FeatureBundle) -> Self {
        RawBundle { trial_ids: b.trial_ids, flagged: b.flagged, features: b.features }
    }
}

impl FeatureBundle {
    pub fn new(features: BTreeMap<Estimator, Vec<SpdMatrix>>) -> Result<Self> {
        let n = features
            .values()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("feature bundle needs at least one estimator"))?;
        for (est, mats) in &features {
            if mats.len() != n {
                return Err(Error::invalid(format!(
                    "estimator {est} has {} trials, expected {n}",
                    mats.len()
                )));
            }
            if let Some(first) = mats.first() {
                if mats.iter().any(|m| m.dim() != first.dim()) {
                    return Err(Error::invalid(format!("estimator {est} mixes matrix dimensions")));
                }
            }
        }
        let flagged = features.keys().map(|&e| (e, 0)).collect();
        Ok(Self { features, trial_ids: (0..n).collect(), flagged })
    }

    pub fn estimators(&self) -> Vec<Estimator> {
        self.features.keys().copied().collect()
    }

    pub fn n_trials(&self) -> usize {
        self.trial_ids.len()
    }

    pub fn trial_ids(&self) -> &[usize] {
        &self.trial_ids
    }

    /// Entries zeroed during extraction because a channel carried no usable signal.
    pub fn flagged(&self) -> &BTreeMap<Estimator, usize> {
        &self.flagged
    }

    pub fn contains(&self, est: Estimator) -> bool {
        self.features.contains_key(&est)
    }

    pub fn get(&self, est: Estimator) -> Result<&[SpdMatrix]> {
        self.features
            .get(&est)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("feature bundle has no {est} features")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Estimator, &[SpdMatrix])> {
        self.features.iter().map(|(e, v)| (*e, v.as_slice()))
    }

    /// Trials at `indices`, keeping their original trial ids.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_trials()) {
            return Err(Error::invalid(format!("trial index {bad} out of range")));
        }
        Ok(Self {
            features: self
                .features
                .iter()
                .map(|(e, v)| (*e, indices.iter().map(|&i| v[i].clone()).collect()))
                .collect(),
            trial_ids: indices.iter().map(|&i| self.trial_ids[i]).collect(),
            flagged: self.flagged.clone(),
        })
    }

    /// Keeps only `estimators`, all of which must be present.
    pub fn select(&self, estimators: &[Estimator]) -> Result<Self> {
        let mut features = BTreeMap::new();
        for &e in estimators {
            features.insert(e, self.get(e)?.to_vec());
        }
        Ok(Self {
            features,
            trial_ids: self.trial_ids.clone(),
            flagged: self.flagged.iter().filter(|(e, _)| estimators.contains(e)).map(|(e, c)| (*e, *c)).collect(),
        })
    }

    /// Replaces every matrix through `f`, preserving trial ids.
    pub fn map_matrices(&self, mut f: impl FnMut(Estimator, &SpdMatrix) -> Result<SpdMatrix>) -> Result<Self> {
        let mut features = BTreeMap::new();
        for (e, mats) in &self.features {
            features.insert(*e, mats.iter().map(|m| f(*e, m)).collect::<Result<Vec<_>>>()?);
        }
        Ok(Self { features, trial_ids: self.trial_ids.clone(), flagged: self.flagged.clone() })
    }

    /// All estimators' matrices for trial `i`.
    pub fn row(&self, i: usize) -> FeatureRow {
        self.features.iter().map(|(e, v)| (*e, v[i].clone())).collect()
    }
}

/// One trial's features keyed by estimator.
pub type FeatureRow = BTreeMap<Estimator, SpdMatrix>;

fn project_fc(values: DMatrix<f64>, floor_rel: f64) -> Result<SpdMatrix> {
    let s = SymmetricMatrix::from_symmetric_part(values)?;
    let scale = s.trace() / s.dim() as f64;
    let eps = floor_rel * if scale > 0.0 { scale } else { 1.0 };
    nearest_spd(&s, eps)
}

fn covariance_feature(trial: &DMatrix<f64>, cfg: &FeatureConfig) -> Result<SpdMatrix> {
    let c = sample_covariance(trial)?;
    let spd = shrink_covariance(&c, cfg.shrinkage)?;
    let floor = cfg.cov_floor * spd.trace() / spd.dim() as f64;
    if spd.eigen().min() < floor {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: spd.eigen().min() });
    }
    Ok(spd)
}

struct TrialFeatures {
    matrices: Vec<SpdMatrix>,
    flagged: Vec<usize>,
}

fn extract_trial(
    trial: &DMatrix<f64>,
    fs_hz: f64,
    estimators: &[Estimator],
    cfg: &FeatureConfig,
) -> Result<TrialFeatures> {
    let (lo, hi) = cfg.band_hz;
    let wants = |e| estimators.contains(&e);
    let csd = if wants(Estimator::Coh) || wants(Estimator::ICoh) {
        let seg_len = (cfg.welch.segment_s * fs_hz).round() as usize;
        Some(cross_spectral_density(
            trial,
            fs_hz,
            WelchParams { seg_len, overlap: cfg.welch.overlap, taper: cfg.welch.taper },
        )?)
    } else {
        None
    };
    let edge = edge_samples(cfg.edge_s, fs_hz);

    let mut matrices = Vec::with_capacity(estimators.len());
    let mut flagged = Vec::with_capacity(estimators.len());
    for &est in estimators {
        let (m, f) = match est {
            Estimator::Cov => (covariance_feature(trial, cfg)?, 0),
            Estimator::Coh => {
                let coh = coherence(csd.as_ref().expect("csd computed"));
                let mut avg = band_average(&coh.freqs_hz, &coh.matrices, lo, hi)?;
                avg.fill_diagonal(1.0);
                (project_fc(avg, cfg.fc_floor)?, coh.flagged)
            }
            Estimator::ICoh => {
                let mut ic = imaginary_coherence(csd.as_ref().expect("csd computed"));
                for m in &mut ic.matrices {
                    m.apply(|v| *v = v.abs());
                }
                let mut avg = band_average(&ic.freqs_hz, &ic.matrices, lo, hi)?;
                avg.fill_diagonal(1.0);
                (project_fc(avg, cfg.fc_floor)?, ic.flagged)
            }
            Estimator::Plv => {
                let c = plv_trial(trial, fs_hz, cfg.band_hz, edge)?;
                (project_fc(c.values, cfg.fc_floor)?, c.flagged)
            }
            Estimator::Aec => {
                let c = aec_trial(trial, fs_hz, cfg.band_hz, edge)?;
                (project_fc(c.values, cfg.fc_floor)?, c.flagged)
            }
        };
        matrices.push(m);
        flagged.push(f);
    }
    Ok(TrialFeatures { matrices, flagged })
}

/// Extracts one SPD matrix per trial and estimator.
///
/// Covariances are shrunk and must already be positive definite; the
/// connectivity estimators are band-averaged, given a unit diagonal where
/// applicable, and projected onto the SPD cone with a relative floor.
pub fn extract_features(e: &EpochSet, estimators: &[Estimator], cfg: &FeatureConfig) -> Result<FeatureBundle> {
    let mut ests = estimators.to_vec();
    ests.sort();
    ests.dedup();
    if ests.is_empty() {
        return Err(Error::invalid("no estimators requested"));
    }
    if e.n_trials() == 0 {
        return Err(Error::invalid("epoch set has no trials"));
    }
    let windowed;
    let e = match cfg.window_s {
        Some((t0, t1)) => {
            windowed = window_epochs(e, t0, t1)?;
            &windowed
        }
        None => e,
    };
    let per_trial: Vec<TrialFeatures> = e
        .trials()
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            extract_trial(t, e.fs_hz(), &ests, cfg)
                .map_err(|err| match err {
                    Error::InvalidInput(msg) => Error::invalid(format!("trial {i}: {msg}")),
                    other => other,
                })
        })
        .collect::<Result<_>>()?;

    let mut features: BTreeMap<Estimator, Vec<SpdMatrix>> =
        ests.iter().map(|&est| (est, Vec::with_capacity(e.n_trials()))).collect();
    let mut flagged: BTreeMap<Estimator, usize> = ests.iter().map(|&est| (est, 0)).collect();
    for tf in per_trial {
        for ((est, m), f) in ests.iter().zip(tf.matrices).zip(tf.flagged) {
            features.get_mut(est).expect("estimator key").push(m);
            *flagged.get_mut(est).expect("estimator key") += f;
        }
    }
    let mut bundle = FeatureBundle::new(features)?;
    bundle.flagged = flagged;
    Ok(bundle)
}
