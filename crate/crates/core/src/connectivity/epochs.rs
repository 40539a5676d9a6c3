use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spd::SymmetricMatrix;

/// Label value for trials whose class is unknown.
pub const UNKNOWN_LABEL: i32 = -1;

/// Trials of multichannel signal, each stored as `channels × samples`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochSet {
    fs_hz: f64,
    channel_names: Vec<String>,
    trials: Vec<DMatrix<f64>>,
    labels: Vec<i32>,
}

impl EpochSet {
    pub fn new(
        fs_hz: f64,
        channel_names: Vec<String>,
        trials: Vec<DMatrix<f64>>,
        labels: Vec<i32>,
    ) -> Result<Self> {
        if !(fs_hz > 0.0 && fs_hz.is_finite()) {
            return Err(Error::invalid(format!("sampling rate must be positive, got {fs_hz}")));
        }
        if trials.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} trials but {} labels",
                trials.len(),
                labels.len()
            )));
        }
        let channels = channel_names.len();
        if channels == 0 {
            return Err(Error::invalid("epoch set needs at least one channel"));
        }
        let samples = trials.first().map(|t| t.ncols()).unwrap_or(2);
        if samples < 2 {
            return Err(Error::invalid("epochs need at least two samples"));
        }
        for (i, t) in trials.iter().enumerate() {
            if t.nrows() != channels || t.ncols() != samples {
                return Err(Error::invalid(format!(
                    "trial {i} has shape {}x{}, expected {channels}x{samples}",
                    t.nrows(),
                    t.ncols()
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("trial {i} contains non-finite samples")));
            }
        }
        if let Some(bad) = labels.iter().find(|&&l| !(l == 0 || l == 1 || l == UNKNOWN_LABEL)) {
            return Err(Error::invalid(format!("label {bad} is not 0, 1 or -1")));
        }
        Ok(Self { fs_hz, channel_names, trials, labels })
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn n_trials(&self) -> usize {
        self.trials.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.trials.first().map(|t| t.ncols()).unwrap_or(0)
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.fs_hz
    }

    pub fn trials(&self) -> &[DMatrix<f64>] {
        &self.trials
    }

    pub fn trial(&self, i: usize) -> &DMatrix<f64> {
        &self.trials[i]
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labels.iter().all(|&l| l != UNKNOWN_LABEL)
    }
}

/// Restricts every trial to samples `[⌊t0·fs⌋, ⌊t1·fs⌋)`.
pub fn window_epochs(e: &EpochSet, t0_s: f64, t1_s: f64) -> Result<EpochSet> {
    let duration = e.duration_s();
    if !(t0_s >= 0.0 && t0_s < t1_s && t1_s <= duration + 1e-9) {
        return Err(Error::invalid(format!(
            "window [{t0_s}, {t1_s}) s is not inside [0, {duration}] s or is empty"
        )));
    }
    let start = (t0_s * e.fs_hz).floor() as usize;
    let end = ((t1_s * e.fs_hz).floor() as usize).min(e.n_samples());
    if end <= start + 1 {
        return Err(Error::invalid(format!(
            "window [{t0_s}, {t1_s}) s holds fewer than two samples"
        )));
    }
    let trials = e
        .trials
        .iter()
        .map(|t| t.columns(start, end - start).into_owned())
        .collect();
    Ok(EpochSet {
        fs_hz: e.fs_hz,
        channel_names: e.channel_names.clone(),
        trials,
        labels: e.labels.clone(),
    })
}

/// Unbiased sample covariance of a `channels × samples` trial.
pub fn sample_covariance(trial: &DMatrix<f64>) -> Result<SymmetricMatrix> {
    let t = trial.ncols();
    if t < 2 {
        return Err(Error::invalid("sample covariance needs at least two samples"));
    }
    let mut centered = trial.clone();
    for mut row in centered.row_iter_mut() {
        let mean = row.sum() / t as f64;
        row.add_scalar_mut(-mean);
    }
    let c = &centered * centered.transpose() / (t as f64 - 1.0);
    SymmetricMatrix::from_symmetric_part(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(fs: f64, samples: usize) -> EpochSet {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trials = (0..3)
            .map(|_| DMatrix::from_fn(2, samples, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        EpochSet::new(fs, vec!["a".into(), "b".into()], trials, vec![0, 1, -1]).unwrap()
    }

    #[test]
    fn window_full_duration_is_identity() {
        let e = set(100.0, 250);
        assert_eq!(window_epochs(&e, 0.0, 2.5).unwrap(), e);
    }

    #[test]
    fn window_length_at_512hz() {
        let e = set(512.0, 8 * 512);
        let w = window_epochs(&e, 3.0, 7.5).unwrap();
        assert_eq!(w.n_samples(), 2304);
        assert_eq!(w.trial(1)[(0, 0)], e.trial(1)[(0, 1536)]);
    }

    #[test]
    fn window_errors() {
        let e = set(100.0, 250);
        assert!(matches!(window_epochs(&e, 1.0, 1.0), Err(Error::InvalidInput(_))));
        assert!(window_epochs(&e, 2.0, 1.0).is_err());
        assert!(window_epochs(&e, 0.0, 3.0).is_err());
    }

    #[test]
    fn epoch_set_validation() {
        assert!(EpochSet::new(0.0, vec!["a".into()], vec![], vec![]).is_err());
        let t = DMatrix::zeros(1, 10);
        assert!(EpochSet::new(10.0, vec!["a".into()], vec![t.clone()], vec![2]).is_err());
        assert!(EpochSet::new(10.0, vec!["a".into(), "b".into()], vec![t], vec![0]).is_err());
    }

    #[test]
    fn covariance_of_constant_channels_is_zero() {
        let t = DMatrix::from_fn(3, 50, |i, _| i as f64 + 1.0);
        let c = sample_covariance(&t).unwrap();
        assert_eq!(c.frobenius_norm(), 0.0);
    }

    #[test]
    fn covariance_of_identical_channels_is_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = DMatrix::from_fn(2, 100, |_, j| x[j]);
        let c = sample_covariance(&t).unwrap();
        assert!((c.get(0, 0) - c.get(0, 1)).abs() < 1e-15);
        assert!((c.get(1, 1) - c.get(0, 1)).abs() < 1e-15);
        assert!(c.as_matrix().determinant().abs() < 1e-15);
    }

    #[test]
    fn covariance_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = DMatrix::from_fn(4, 300, |_, _| rng.random_range(-5.0..5.0));
        let c = sample_covariance(&t).unwrap();
        let n = t.ncols() as f64;
        for i in 0..4 {
            for j in 0..4 {
                let mi: f64 = t.row(i).iter().sum::<f64>() / n;
                let mj: f64 = t.row(j).iter().sum::<f64>() / n;
                let mut acc = 0.0;
                for s in 0..t.ncols() {
                    acc += (t[(i, s)] - mi) * (t[(j, s)] - mj);
                }
                acc /= n - 1.0;
                assert!((c.get(i, j) - acc).abs() <= 1e-12 * acc.abs().max(1.0));
            }
        }
    }
}
