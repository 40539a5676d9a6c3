use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use rigoletto::archive::{EvaluationReport, FeatureArchive, TransferFile};
use rigoletto::dataset::{stage_dataset, DatasetManifest};
use rigoletto::output::Staged;
use rigoletto_core::connectivity::EpochSet;
use tempfile::TempDir;

const FAST: &str = "[cv]\nfolds = 3\nrepeats = 1\n[classifier]\ninner_folds = 3\n";

fn rigoletto(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rigoletto")).args(args).output().unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn expect_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

struct Fixture {
    dir: TempDir,
    config: PathBuf,
    manifest: PathBuf,
}

impl Fixture {
    fn new(extra: &[&str]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("run.toml");
        std::fs::write(&config, FAST).unwrap();
        let data = dir.path().join("data");
        let mut args = vec!["synth", "--out", data.to_str().unwrap(), "--trials-per-class", "15", "--channels", "8", "--fs", "128"];
        args.extend_from_slice(extra);
        expect_code(&rigoletto(&args), 0);
        Self { manifest: data.join("manifest.json"), config, dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut all = args.to_vec();
        let c = s(&self.config);
        all.extend_from_slice(&["--config", &c]);
        rigoletto(&all)
    }

    fn features(&self) -> PathBuf {
        let out = self.path("features.json");
        expect_code(&self.run(&["features", "--dataset", &s(&self.manifest), "--out", &s(&out)]), 0);
        out
    }
}

#[test]
fn usage_errors_exit_with_one() {
    expect_code(&rigoletto(&[]), 1);
    expect_code(&rigoletto(&["frobnicate"]), 1);
    expect_code(&rigoletto(&["features", "--dataset", "x"]), 1);
    expect_code(&rigoletto(&["--help"]), 0);
}

#[test]
fn data_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("f.json"));
    expect_code(&rigoletto(&["features", "--dataset", "/nonexistent/manifest.json", "--out", &out]), 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[classifier]\nridge_alhpa = 2.0\n").unwrap();
    let r = rigoletto(&["features", "--dataset", "/nonexistent/manifest.json", "--out", &out, "--config", &s(&bad)]);
    expect_code(&r, 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("ridge_alhpa"));
    assert!(!dir.path().join("f.json").exists());
}

#[test]
fn constant_channel_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let trials = (0..4)
        .map(|t| DMatrix::from_fn(3, 256, |c, k| if c == 1 { 1.0 } else { ((k * (c + 2) + t) % 17) as f64 - 8.0 }))
        .collect();
    let e = EpochSet::new(128.0, vec!["a".into(), "b".into(), "c".into()], trials, vec![0, 1, 0, 1]).unwrap();
    let mut staged = Staged::default();
    let manifest = stage_dataset(dir.path(), &[("S01".into(), e)], &mut staged).unwrap();
    staged.commit().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[features]\nwindow_s = [0.0, 2.0]\n").unwrap();
    let out = dir.path().join("f.json");
    let r = rigoletto(&["features", "--dataset", &s(&manifest), "--out", &s(&out), "--config", &s(&cfg)]);
    expect_code(&r, 3);
    assert!(!out.exists());
}

#[test]
fn truncated_data_file_fails_before_writing() {
    let fx = Fixture::new(&["--subjects", "2"]);
    let manifest: DatasetManifest = serde_json::from_slice(&std::fs::read(&fx.manifest).unwrap()).unwrap();
    let data = fx.manifest.parent().unwrap().join(&manifest.subjects[1].data_file);
    let bytes = std::fs::read(&data).unwrap();
    std::fs::write(&data, &bytes[..bytes.len() - 4]).unwrap();
    let out = fx.path("features.json");
    let r = fx.run(&["features", "--dataset", &s(&fx.manifest), "--out", &s(&out)]);
    expect_code(&r, 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains(&manifest.subjects[1].data_file));
    assert!(!out.exists());
    let leftovers: Vec<_> = std::fs::read_dir(fx.dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(leftovers.iter().all(|n| !n.to_string_lossy().contains(".tmp")), "{leftovers:?}");
}

#[test]
fn features_hold_the_default_estimator_groups() {
    let fx = Fixture::new(&["--subjects", "2"]);
    let archive: FeatureArchive = serde_json::from_slice(&std::fs::read(fx.features()).unwrap()).unwrap();
    assert_eq!(archive.subjects.len(), 2);
    for subject in &archive.subjects {
        let names: Vec<String> = subject.bundle.estimators().iter().map(|e| e.to_string()).collect();
        assert_eq!(names, ["Cov", "Coh", "PLV"]);
        assert_eq!(subject.bundle.n_trials(), 30);
    }
}

#[test]
fn train_then_predict_fits_the_training_subject() {
    let fx = Fixture::new(&["--subjects", "1"]);
    let features = fx.features();
    let model = fx.path("model.json");
    expect_code(&fx.run(&["train", "--features", &s(&features), "--out", &s(&model)]), 0);
    let csv_path = fx.path("pred.csv");
    expect_code(&rigoletto(&["predict", "--model", &s(&model), "--features", &s(&features), "--out", &s(&csv_path)]), 0);

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.split('\n');
    assert_eq!(lines.next(), Some("trial_index,label,prob_0,prob_1"));
    assert!(csv.ends_with('\n') && !csv.contains('\r'));
    let archive: FeatureArchive = serde_json::from_slice(&std::fs::read(&features).unwrap()).unwrap();
    let truth = &archive.subjects[0].labels;
    let mut hits = 0;
    for (i, line) in lines.filter(|l| !l.is_empty()).enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], i.to_string());
        let (p0, p1): (f64, f64) = (f[2].parse().unwrap(), f[3].parse().unwrap());
        assert!(f[2].split('.').nth(1).unwrap().len() == 6 && f[3].split('.').nth(1).unwrap().len() == 6);
        assert!((p0 + p1 - 1.0).abs() <= 1e-5);
        let label: i32 = f[1].parse().unwrap();
        assert_eq!(label, if p1 > p0 { 1 } else { 0 });
        hits += (label == truth[i]) as usize;
    }
    assert!(hits as f64 >= 0.95 * truth.len() as f64, "{hits}/{}", truth.len());
}

#[test]
fn mismatched_config_is_refused_unless_allowed() {
    let fx = Fixture::new(&["--subjects", "1"]);
    let features = fx.features();
    let other = fx.path("other.toml");
    std::fs::write(&other, format!("{FAST}fgda_lambda = 0.2\n")).unwrap();
    let model = fx.path("model.json");
    let args = ["train", "--features", &s(&features), "--out", &s(&model), "--config", &s(&other)];
    let r = rigoletto(&args);
    expect_code(&r, 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("config hash mismatch"));
    assert!(!model.exists());
    let mut allowed = args.to_vec();
    allowed.push("--allow-config-mismatch");
    expect_code(&rigoletto(&allowed), 0);

    let other_features = fx.path("other-features.json");
    let r = rigoletto(&["features", "--dataset", &s(&fx.manifest), "--out", &s(&other_features), "--config", &s(&other)]);
    expect_code(&r, 0);
    let base_model = fx.path("base-model.json");
    expect_code(&fx.run(&["train", "--features", &s(&features), "--out", &s(&base_model)]), 0);
    let csv = fx.path("p.csv");
    let predict = ["predict", "--model", &s(&base_model), "--features", &s(&other_features), "--out", &s(&csv)];
    expect_code(&rigoletto(&predict), 2);
    assert!(!csv.exists());
    let mut allowed = predict.to_vec();
    allowed.push("--allow-config-mismatch");
    expect_code(&rigoletto(&allowed), 0);

    let seeded = fx.run(&["train", "--features", &s(&features), "--out", &s(&fx.path("m2.json")), "--seed", "9"]);
    expect_code(&seeded, 0);
}

#[test]
fn unlabeled_training_trials_are_rejected() {
    let fx = Fixture::new(&["--subjects", "1"]);
    let manifest: DatasetManifest = serde_json::from_slice(&std::fs::read(&fx.manifest).unwrap()).unwrap();
    let labels = fx.manifest.parent().unwrap().join(&manifest.subjects[0].labels_file);
    let text = std::fs::read_to_string(&labels).unwrap().replacen("0\n", "-1\n", 1);
    std::fs::write(&labels, text).unwrap();
    let features = fx.features();
    let r = fx.run(&["train", "--features", &s(&features), "--out", &s(&fx.path("m.json"))]);
    expect_code(&r, 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("unlabeled"));
}

#[test]
fn evaluate_reports_five_pipelines_with_consistent_means() {
    let fx = Fixture::new(&["--subjects", "2"]);
    let out = fx.path("eval.json");
    expect_code(&fx.run(&["evaluate", "--dataset", &s(&fx.manifest), "--out", &s(&out)]), 0);
    let report: EvaluationReport = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let names = ["FgMDM-Cov", "FgMDM-Coh", "FgMDM-PLV", "CSP+LDA", "Ensemble"];
    for subject in &report.subjects {
        let got: Vec<&str> = subject.pipelines.iter().map(|p| p.pipeline.as_str()).collect();
        assert_eq!(got, names);
        for p in &subject.pipelines {
            assert_eq!(p.fold_kappa.len(), 3);
            let mean = p.fold_kappa.iter().sum::<f64>() / 3.0;
            assert!((mean - p.mean_kappa).abs() <= 1e-12);
            assert_eq!(p.config_hash.as_deref(), Some(report.config_hash.as_str()));
        }
    }
    for (k, avg) in report.average.iter().enumerate() {
        let mean = report.subjects.iter().map(|s| s.pipelines[k].mean_kappa).sum::<f64>() / 2.0;
        assert!((mean - avg.mean_kappa).abs() <= 1e-12);
    }
}

#[test]
fn transfer_selects_each_clone() {
    let fx = Fixture::new(&["--subjects", "4", "--clones"]);
    let out = fx.path("transfer.json");
    expect_code(&fx.run(&["transfer", "--dataset", &s(&fx.manifest), "--out", &s(&out)]), 0);
    let t: TransferFile = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let r = &t.report;
    let n = r.subjects.len();
    for i in 0..n {
        assert_eq!(r.distance[i][i], 0.0);
        for j in 0..n {
            assert!((r.distance[i][j] - r.distance[j][i]).abs() <= 1e-8);
        }
        let nearest = (0..n).filter(|&j| j != i).fold(None, |b: Option<usize>, j| match b {
            Some(b) if r.distance[i][b] <= r.distance[i][j] => Some(b),
            _ => Some(j),
        });
        assert_eq!(r.selected[i], r.subjects[nearest.unwrap()]);
        assert_eq!(r.selected[i], r.subjects[i ^ 1]);
    }
}

#[test]
fn transfer_needs_the_covariance_estimator() {
    let fx = Fixture::new(&["--subjects", "2"]);
    std::fs::write(&fx.config, format!("estimators = [\"Coh\", \"PLV\"]\n{FAST}")).unwrap();
    let r = fx.run(&["transfer", "--dataset", &s(&fx.manifest), "--out", &s(&fx.path("t.json"))]);
    expect_code(&r, 2);
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (p, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        expect_code(&rigoletto(&["synth", "--out", &s(p), "--subjects", "2", "--trials-per-class", "4", "--seed", seed]), 0);
    }
    for f in ["manifest.json", "S01.f32", "S01.labels", "S02.f32"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(std::fs::read(a.join("S01.f32")).unwrap(), std::fs::read(c.join("S01.f32")).unwrap());
}
