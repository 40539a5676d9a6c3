//! The subcommands, callable without going through argument parsing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rigoletto_core::connectivity::{extract_features, EpochSet, Estimator, FeatureBundle, UNKNOWN_LABEL};
use rigoletto_core::eval::{
    cross_validate, leave_one_subject_out, make_splits, CspLdaPipeline, EnsemblePipeline, FgmdmPipeline, Pipeline,
    SubjectData,
};
use rigoletto_core::manifold::{mean_airm, MeanOptions, Recentering};
use rigoletto_core::transfer::recenter_bundle;
use rigoletto_core::Error;

use crate::archive::{
    check_version, EvaluationReport, FeatureArchive, ModelFile, PipelineAverage, SubjectFeatures, SubjectScores,
    TransferFile, FORMAT_VERSION,
};
use crate::config::RunConfig;
use crate::dataset::{stage_dataset, Dataset};
use crate::error::{CliError, Result};
use crate::output::{read_json, to_json, to_json_compact, write_atomic, Staged};
use crate::synth::{generate, SynthParams};

pub fn cmd_synth(out_dir: &Path, params: &SynthParams) -> Result<PathBuf> {
    let subjects = generate(params)?;
    let mut staged = Staged::default();
    let manifest = stage_dataset(out_dir, &subjects, &mut staged)?;
    staged.commit()?;
    Ok(manifest)
}

fn check_hash(what: &str, expected: &str, found: &str, allow: bool) -> Result<()> {
    if expected != found && !allow {
        return Err(CliError::ConfigMismatch { what: what.into(), expected: expected.into(), found: found.into() });
    }
    Ok(())
}

fn require_labels(id: &str, labels: &[i32]) -> Result<()> {
    if let Some(i) = labels.iter().position(|&l| l == UNKNOWN_LABEL) {
        return Err(Error::InvalidInput(format!("subject {id}: trial {i} is unlabeled")).into());
    }
    Ok(())
}

/// Estimators to extract: the configured ones plus Cov, which the baseline
/// and the transport maps need.
fn extraction_set(cfg: &RunConfig) -> Vec<Estimator> {
    let mut e = cfg.estimators.clone();
    if !e.contains(&Estimator::Cov) {
        e.insert(0, Estimator::Cov);
    }
    e
}

fn features_of(subjects: &[(String, EpochSet)], estimators: &[Estimator], cfg: &RunConfig) -> Result<Vec<SubjectFeatures>> {
    subjects
        .iter()
        .map(|(id, e)| {
            let bundle = extract_features(e, estimators, &cfg.features)
                .map_err(|err| in_context(format!("subject {id}"), err))?;
            Ok(SubjectFeatures { id: id.clone(), labels: e.labels().to_vec(), bundle })
        })
        .collect()
}

/// Prefixes a data error with its context; numeric failures pass through so
/// they keep their exit code.
fn in_context(what: String, err: Error) -> CliError {
    if err.is_numeric() {
        CliError::Core(err)
    } else {
        CliError::Data(format!("{what}: {err}"))
    }
}

pub fn cmd_features(dataset: &Path, cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds = Dataset::open(dataset)?;
    let subjects = ds.load_all()?;
    let archive = FeatureArchive {
        format_version: FORMAT_VERSION,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        subjects: features_of(&subjects, &cfg.estimators, cfg)?,
    };
    write_atomic(out, to_json_compact(&archive)?)
}

fn load_archive(path: &Path) -> Result<FeatureArchive> {
    let a: FeatureArchive = read_json(path)?;
    check_version(a.format_version, "feature archive")?;
    Ok(a)
}

pub fn cmd_train(features: &Path, subject: Option<&str>, cfg: &RunConfig, out: &Path, allow_mismatch: bool) -> Result<()> {
    let archive = load_archive(features)?;
    check_hash("feature archive", &cfg.hash(), &archive.config_hash, allow_mismatch)?;
    let s = archive.subject(subject)?;
    require_labels(&s.id, &s.labels)?;
    let bundle = s.bundle.select(&cfg.estimators)?;
    let model = rigoletto_core::classify::ensemble_fit(&bundle, &s.labels, &cfg.ensemble())?;
    let file = ModelFile { format_version: FORMAT_VERSION, seed: cfg.seed, config_hash: cfg.hash(), subject: s.id.clone(), model };
    write_atomic(out, to_json_compact(&file)?)
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let m: ModelFile = read_json(path)?;
    check_version(m.format_version, "model file")?;
    Ok(m)
}

/// Moves the covariance features so their mean lands on `reference`.
pub fn transport_onto(bundle: &FeatureBundle, reference: &rigoletto_core::spd::SpdMatrix) -> Result<FeatureBundle> {
    let mean = mean_airm(bundle.get(Estimator::Cov)?, MeanOptions::default())?;
    let map = Recentering::new(reference, &mean)?;
    Ok(recenter_bundle(bundle, &map, &[Estimator::Cov])?)
}

pub fn predictions_csv(model: &ModelFile, bundle: &FeatureBundle) -> Result<String> {
    let estimators = model.model.estimators().to_vec();
    let mut bundle = bundle.select(&estimators)?;
    if let Some(reference) = model.model.reference_mean() {
        bundle = transport_onto(&bundle, reference)?;
    }
    let preds = model.model.predict_bundle(&bundle)?;
    let mut csv = String::from("trial_index,label,prob_0,prob_1\n");
    for (id, p) in bundle.trial_ids().iter().zip(preds) {
        writeln!(csv, "{id},{},{:.6},{:.6}", p.label, p.probabilities[0], p.probabilities[1]).expect("string write");
    }
    Ok(csv)
}

pub fn cmd_predict(model: &Path, features: &Path, subject: Option<&str>, out: &Path, allow_mismatch: bool) -> Result<()> {
    let m = load_model(model)?;
    let archive = load_archive(features)?;
    check_hash("feature archive", &m.config_hash, &archive.config_hash, allow_mismatch)?;
    let s = archive.subject(subject)?;
    write_atomic(out, predictions_csv(&m, &s.bundle)?.into_bytes())
}

fn labeled_subjects(dataset: &Path, cfg: &RunConfig) -> Result<Vec<SubjectFeatures>> {
    let ds = Dataset::open(dataset)?;
    let subjects = ds.load_all()?;
    for (id, e) in &subjects {
        require_labels(id, e.labels())?;
    }
    features_of(&subjects, &extraction_set(cfg), cfg)
}

/// The compared pipelines: FgMDM per configured estimator, CSP+LDA, ensemble.
pub fn pipelines(cfg: &RunConfig) -> Vec<Box<dyn Pipeline>> {
    let mut out: Vec<Box<dyn Pipeline>> = cfg
        .estimators
        .iter()
        .map(|&estimator| {
            Box::new(FgmdmPipeline { estimator, metric: cfg.classifier.metric, lambda: cfg.classifier.fgda_lambda })
                as Box<dyn Pipeline>
        })
        .collect();
    out.push(Box::new(CspLdaPipeline { filters: cfg.classifier.csp_filters }));
    out.push(Box::new(EnsemblePipeline { estimators: cfg.estimators.clone(), config: cfg.ensemble() }));
    out
}

pub fn evaluate_subjects(subjects: &[SubjectFeatures], cfg: &RunConfig) -> Result<EvaluationReport> {
    let hash = cfg.hash();
    let pipes = pipelines(cfg);
    let mut scores = Vec::with_capacity(subjects.len());
    for s in subjects {
        let plan = make_splits(s.labels.len(), Some(&s.labels), cfg.cv.folds, cfg.cv.repeats, cfg.seed)?;
        let reports = pipes
            .iter()
            .map(|p| {
                cross_validate(&s.bundle, &s.labels, p.as_ref(), &plan)
                    .map(|r| r.with_config_hash(hash.clone()))
                    .map_err(|e| in_context(format!("subject {}, {}", s.id, p.name()), e))
            })
            .collect::<Result<Vec<_>>>()?;
        scores.push(SubjectScores { id: s.id.clone(), pipelines: reports });
    }
    let average = pipes
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let n = scores.len() as f64;
            PipelineAverage {
                pipeline: p.name(),
                mean_kappa: scores.iter().map(|s| s.pipelines[k].mean_kappa).sum::<f64>() / n,
                mean_accuracy: scores.iter().map(|s| s.pipelines[k].mean_accuracy).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(EvaluationReport { format_version: FORMAT_VERSION, config_hash: hash, seed: cfg.seed, subjects: scores, average })
}

pub fn cmd_evaluate(dataset: &Path, cfg: &RunConfig, out: &Path) -> Result<EvaluationReport> {
    let subjects = labeled_subjects(dataset, cfg)?;
    let report = evaluate_subjects(&subjects, cfg)?;
    write_atomic(out, to_json(&report)?)?;
    Ok(report)
}

pub fn transfer_subjects(subjects: &[SubjectFeatures], cfg: &RunConfig) -> Result<TransferFile> {
    let data = subjects
        .iter()
        .map(|s| {
            Ok(SubjectData { id: s.id.clone(), bundle: s.bundle.select(&extraction_set(cfg))?, labels: s.labels.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = leave_one_subject_out(&data, &cfg.ensemble())?;
    Ok(TransferFile { format_version: FORMAT_VERSION, config_hash: cfg.hash(), seed: cfg.seed, report })
}

pub fn cmd_transfer(dataset: &Path, cfg: &RunConfig, out: &Path) -> Result<TransferFile> {
    if !cfg.estimators.contains(&Estimator::Cov) {
        return Err(CliError::Config("estimators: transfer needs Cov for the subject means".into()));
    }
    let subjects = labeled_subjects(dataset, cfg)?;
    if subjects.len() < 2 {
        return Err(CliError::Data("transfer needs at least two subjects".into()));
    }
    let report = transfer_subjects(&subjects, cfg)?;
    write_atomic(out, to_json(&report)?)?;
    Ok(report)
}
