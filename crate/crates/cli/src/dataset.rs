//! On-disk datasets: a JSON manifest next to raw little-endian `f32` sample
//! files (trial-major, then channel, then sample) and one label per line.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rigoletto_core::connectivity::{EpochSet, UNKNOWN_LABEL};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::output::Staged;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectEntry {
    pub id: String,
    pub fs_hz: f64,
    pub channels: Vec<String>,
    pub trials: usize,
    pub samples: usize,
    /// Relative to the manifest's directory.
    pub data_file: String,
    pub labels_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub subjects: Vec<SubjectEntry>,
}

impl SubjectEntry {
    pub fn expected_bytes(&self) -> u64 {
        (self.trials * self.channels.len() * self.samples * 4) as u64
    }
}

/// A manifest with its location, so data paths can be resolved.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    /// Reads the manifest and checks every referenced file exists with the
    /// expected size.
    pub fn open(manifest_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest_path).map_err(|e| CliError::io(manifest_path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", manifest_path.display())))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(CliError::Data(format!(
                "unsupported manifest format_version {} (expected {FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        if manifest.subjects.is_empty() {
            return Err(CliError::Data("manifest lists no subjects".into()));
        }
        let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let ds = Self { root, manifest };
        for s in &ds.manifest.subjects {
            let data = ds.root.join(&s.data_file);
            let meta = std::fs::metadata(&data).map_err(|e| CliError::io(&data, e))?;
            if meta.len() != s.expected_bytes() {
                return Err(CliError::io(
                    &data,
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("size is {} bytes, manifest implies {}", meta.len(), s.expected_bytes()),
                    ),
                ));
            }
            let labels = ds.root.join(&s.labels_file);
            std::fs::metadata(&labels).map_err(|e| CliError::io(&labels, e))?;
        }
        Ok(ds)
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.manifest.subjects.iter().map(|s| s.id.clone()).collect()
    }

    pub fn load_subject(&self, entry: &SubjectEntry) -> Result<EpochSet> {
        let data_path = self.root.join(&entry.data_file);
        let bytes = std::fs::read(&data_path).map_err(|e| CliError::io(&data_path, e))?;
        if bytes.len() as u64 != entry.expected_bytes() {
            return Err(CliError::io(
                &data_path,
                std::io::Error::new(std::io::ErrorKind::InvalidData, "file size does not match manifest"),
            ));
        }
        let labels_path = self.root.join(&entry.labels_file);
        let labels = read_labels(&labels_path)?;
        if labels.len() != entry.trials {
            return Err(CliError::Data(format!(
                "{}: {} labels for {} trials",
                labels_path.display(),
                labels.len(),
                entry.trials
            )));
        }
        let (c, t) = (entry.channels.len(), entry.samples);
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let trials = values
            .chunks_exact(c * t)
            .map(|block| DMatrix::from_row_slice(c, t, block))
            .collect();
        Ok(EpochSet::new(entry.fs_hz, entry.channels.clone(), trials, labels)?)
    }

    pub fn load_all(&self) -> Result<Vec<(String, EpochSet)>> {
        self.manifest.subjects.iter().map(|s| Ok((s.id.clone(), self.load_subject(s)?))).collect()
    }
}

pub fn read_labels(path: &Path) -> Result<Vec<i32>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let v: i32 = l
                .trim()
                .parse()
                .map_err(|_| CliError::Data(format!("{}:{}: bad label '{l}'", path.display(), i + 1)))?;
            if v == 0 || v == 1 || v == UNKNOWN_LABEL {
                Ok(v)
            } else {
                Err(CliError::Data(format!("{}:{}: label must be 0, 1 or -1", path.display(), i + 1)))
            }
        })
        .collect()
}

pub fn encode_samples(e: &EpochSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(e.n_trials() * e.n_channels() * e.n_samples() * 4);
    for t in e.trials() {
        for row in t.row_iter() {
            for v in row.iter() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    out
}

pub fn encode_labels(labels: &[i32]) -> Vec<u8> {
    labels.iter().map(|l| format!("{l}\n")).collect::<String>().into_bytes()
}

/// Stages the sample and label files of each subject plus the manifest.
pub fn stage_dataset(out_dir: &Path, subjects: &[(String, EpochSet)], staged: &mut Staged) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(subjects.len());
    for (id, e) in subjects {
        let data_file = format!("{id}.f32");
        let labels_file = format!("{id}.labels");
        staged.add(out_dir.join(&data_file), encode_samples(e))?;
        staged.add(out_dir.join(&labels_file), encode_labels(e.labels()))?;
        entries.push(SubjectEntry {
            id: id.clone(),
            fs_hz: e.fs_hz(),
            channels: e.channel_names().to_vec(),
            trials: e.n_trials(),
            samples: e.n_samples(),
            data_file,
            labels_file,
        });
    }
    let manifest = DatasetManifest { format_version: FORMAT_VERSION, subjects: entries };
    let path = out_dir.join("manifest.json");
    staged.add(&path, crate::output::to_json(&manifest)?)?;
    Ok(path)
}
