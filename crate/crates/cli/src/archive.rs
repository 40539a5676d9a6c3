//! Serialized artifacts: feature archives, trained models and reports.

use rigoletto_core::classify::EnsembleModel;
use rigoletto_core::connectivity::FeatureBundle;
use rigoletto_core::eval::{ScoreReport, TransferReport};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectFeatures {
    pub id: String,
    pub labels: Vec<i32>,
    pub bundle: FeatureBundle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureArchive {
    pub format_version: u32,
    pub config_hash: String,
    pub config: RunConfig,
    pub subjects: Vec<SubjectFeatures>,
}

impl FeatureArchive {
    /// The named subject, or the only one when no name is given.
    pub fn subject(&self, id: Option<&str>) -> Result<&SubjectFeatures> {
        match id {
            Some(id) => self
                .subjects
                .iter()
                .find(|s| s.id == id)
                .ok_or_else(|| CliError::Data(format!("no subject '{id}' in feature archive"))),
            None if self.subjects.len() == 1 => Ok(&self.subjects[0]),
            None => Err(CliError::Usage(format!(
                "archive holds {} subjects; choose one with --subject",
                self.subjects.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub subject: String,
    pub model: EnsembleModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectScores {
    pub id: String,
    pub pipelines: Vec<ScoreReport>,
}

/// Per-pipeline average over subjects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineAverage {
    pub pipeline: String,
    pub mean_kappa: f64,
    pub mean_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub subjects: Vec<SubjectScores>,
    pub average: Vec<PipelineAverage>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferFile {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub report: TransferReport,
}

pub fn check_version(found: u32, what: &str) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(CliError::Data(format!("{what} has format_version {found}, expected {FORMAT_VERSION}")));
    }
    Ok(())
}
