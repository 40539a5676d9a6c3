use std::path::Path;

use rigoletto_core::classify::EnsembleConfig;
use rigoletto_core::connectivity::{Estimator, FeatureConfig};
use rigoletto_core::manifold::Metric;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub metric: Metric,
    pub fgda_lambda: f64,
    pub ridge_alpha: f64,
    /// Inner folds for the stacker's out-of-fold probabilities.
    pub inner_folds: usize,
    pub csp_filters: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        let e = EnsembleConfig::default();
        Self {
            metric: e.metric,
            fgda_lambda: e.fgda_lambda,
            ridge_alpha: e.ridge_alpha,
            inner_folds: e.inner_folds,
            csp_filters: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: 5, repeats: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    pub features: FeatureConfig,
    pub classifier: ClassifierConfig,
    pub cv: CvConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            estimators: vec![Estimator::Cov, Estimator::Coh, Estimator::Plv],
            features: FeatureConfig::default(),
            classifier: ClassifierConfig::default(),
            cv: CvConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.normalize()?;
        Ok(cfg)
    }

    /// Reads `path`, or the defaults when no path is given; `seed` overrides the file.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    fn normalize(&mut self) -> Result<()> {
        self.estimators.sort();
        self.estimators.dedup();
        if self.estimators.is_empty() {
            return Err(CliError::Config("estimators: at least one estimator is required".into()));
        }
        if self.cv.folds < 2 || self.cv.repeats == 0 {
            return Err(CliError::Config("cv: need folds >= 2 and repeats >= 1".into()));
        }
        if self.classifier.csp_filters == 0 || self.classifier.csp_filters % 2 != 0 {
            return Err(CliError::Config("classifier.csp_filters: must be a positive even number".into()));
        }
        Ok(())
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            metric: self.classifier.metric,
            fgda_lambda: self.classifier.fgda_lambda,
            ridge_alpha: self.classifier.ridge_alpha,
            inner_folds: self.classifier.inner_folds,
            seed: self.seed,
        }
    }

    /// SHA-256 of the resolved configuration without the seed, as hex.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("seed");
        }
        let canonical = serde_json::to_vec(&value).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.features.window_s, Some((3.0, 7.5)));
        assert_eq!(cfg.features.band_hz, (8.0, 30.0));
        assert_eq!(cfg.cv, CvConfig { folds: 5, repeats: 10 });
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_toml("bogus_key = 1").unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
        let err = RunConfig::from_toml("[features]\nwindoww = [1.0, 2.0]").unwrap_err();
        assert!(err.to_string().contains("windoww"), "{err}");
    }

    #[test]
    fn parses_overrides() {
        let cfg = RunConfig::from_toml(
            r#"
            seed = 7
            estimators = ["PLV", "cov"]
            [features]
            band_hz = [10.0, 20.0]
            [classifier]
            metric = "airm"
            [cv]
            repeats = 2
            "#,
        );
        // Estimator names are case-sensitive in files.
        assert!(cfg.is_err());
        let cfg = RunConfig::from_toml(
            r#"
            seed = 7
            estimators = ["PLV", "Cov"]
            [features]
            band_hz = [10.0, 20.0]
            [classifier]
            metric = "airm"
            [cv]
            repeats = 2
            "#,
        )
        .unwrap();
        assert_eq!(cfg.estimators, vec![Estimator::Cov, Estimator::Plv]);
        assert_eq!(cfg.classifier.metric, Metric::Airm);
        assert_eq!(cfg.cv.repeats, 2);
    }

    #[test]
    fn hash_ignores_seed_only() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 99, ..RunConfig::default() };
        assert_eq!(a.hash(), b.hash());
        let mut c = RunConfig::default();
        c.features.band_hz = (8.0, 25.0);
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
