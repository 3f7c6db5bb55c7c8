use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use motorgraph::eval::{BinaryCounts, DATASETS};
use motorgraph::io::read_manifest;
use motorgraph::model::{predict, Params};
use motorgraph_cli::checkpoint::Checkpoint;
use motorgraph_cli::commands::DiagnosisReport;
use tempfile::TempDir;

fn motorgraph(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motorgraph"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(cwd: &Path, args: &[&str]) -> Output {
    let out = motorgraph(cwd, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: &str = r#"{"seed": 3, "simulation": {"replicates": 1}, "experiment": {"model": {"epochs": 40}}}"#;

/// One simulated dataset and trained model shared by the tests.
struct Fixture {
    _dir: TempDir,
    root: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        std::fs::write(root.join("small.json"), SMALL).unwrap();
        ok(&root, &["-q", "--config", "small.json", "simulate", "--out", "data"]);
        ok(&root, &["-q", "--config", "small.json", "train", "--dataset", "data", "--out", "model"]);
        Fixture { _dir: dir, root }
    })
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<BTreeMap<String, String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| header.iter().cloned().zip(rec.unwrap().iter().map(str::to_string)).collect())
        .collect();
    (header, rows)
}

#[test]
fn simulate_writes_the_full_grid() {
    let f = fixture();
    let manifest = read_manifest(&f.root.join("data")).unwrap();
    assert_eq!(manifest.recordings.len(), 100);
    for e in &manifest.recordings {
        assert!(f.root.join("data").join(&e.file).is_file(), "{}", e.file);
        assert_eq!(e.channels, ["phase_a", "phase_b", "phase_c", "vibration"]);
    }
    assert!(f.root.join("data/config.json").is_file());
}

#[test]
fn simulate_counts_per_condition_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"simulation": {"replicates": 2, "machine": {"duration": 0.3}}}"#).unwrap();
    let out = ok(dir.path(), &["--config", "c.json", "simulate", "--out", "d"]);
    let text = stderr(&out);
    assert!(text.contains("wrote 200 recordings"), "{text}");
    assert!(text.lines().any(|l| l.split_whitespace().eq(["healthy-s000", "8"])), "{text}");
    assert_eq!(read_manifest(&dir.path().join("d")).unwrap().recordings.len(), 200);
}

#[test]
fn missing_output_parent_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = motorgraph(dir.path(), &["simulate", "--out", "no/such/parent/data"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("no/such/parent"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"experiment": {"window": {"lenght": 512}}}"#).unwrap();
    let out = motorgraph(dir.path(), &["--config", "c.json", "simulate", "--out", "d"]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("cli: config") && msg.contains("experiment.window") && msg.contains("lenght"), "{msg}");
    assert!(!dir.path().join("d").exists());
}

#[test]
fn missing_paths_are_reported_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = motorgraph(dir.path(), &["train", "--out", "m"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--dataset"), "{}", stderr(&out));
    let out = motorgraph(dir.path(), &["train", "--dataset", "absent", "--out", "m"]);
    assert!(stderr(&out).contains("absent/manifest.json"), "{}", stderr(&out));
    assert!(!dir.path().join("m").exists());
}

#[test]
fn invalid_thread_cap_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_motorgraph"))
        .args(["simulate", "--out", "d"])
        .env("MOTORGRAPH_THREADS", "many")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).contains("MOTORGRAPH_THREADS"));
}

#[test]
fn training_log_has_one_row_per_epoch_and_learns() {
    let f = fixture();
    let (header, rows) = read_csv(&f.root.join("model/training_log.csv"));
    assert_eq!(header, ["epoch", "train_loss", "anomaly_loss", "severity_loss", "type_loss", "val_accuracy"]);
    assert_eq!(rows.len(), 40);
    let acc = |r: &BTreeMap<String, String>| r["val_accuracy"].parse::<f64>().unwrap();
    assert!(acc(&rows[39]) >= acc(&rows[0]));
    let loss = |r: &BTreeMap<String, String>| r["train_loss"].parse::<f64>().unwrap();
    assert!(loss(&rows[39]) < loss(&rows[0]));
}

#[test]
fn zero_epochs_checkpoints_the_initial_state() {
    let f = fixture();
    let out = tempfile::tempdir().unwrap();
    let data = f.root.join("data");
    ok(
        out.path(),
        &["-q", "--seed", "5", "train", "--dataset", data.to_str().unwrap(), "--out", "m"],
    );
    std::fs::write(out.path().join("z.json"), r#"{"seed": 5, "experiment": {"model": {"epochs": 0}}}"#).unwrap();
    ok(out.path(), &["-q", "--config", "z.json", "train", "--dataset", data.to_str().unwrap(), "--out", "z"]);
    let ckpt = Checkpoint::load(&out.path().join("z/checkpoint.json")).unwrap();
    assert_eq!(ckpt.epoch, 0);
    let state = &ckpt.model.state;
    assert_eq!(state.params, Params::init(ckpt.input_dim, &state.config));
    let (_, rows) = read_csv(&out.path().join("z/training_log.csv"));
    assert!(rows.is_empty());
    let trained = Checkpoint::load(&out.path().join("m/checkpoint.json")).unwrap();
    assert_eq!(trained.seed, ckpt.seed, "--seed and config seed derive the same model seed");
    assert_ne!(trained.model.state.params, state.params);
}

#[test]
fn checkpoint_reload_predicts_identically() {
    let f = fixture();
    let path = f.root.join("model/checkpoint.json");
    let a = Checkpoint::load(&path).unwrap();
    let text = serde_json::to_string_pretty(&a).unwrap() + "\n";
    assert_eq!(text, std::fs::read_to_string(&path).unwrap());
    let (_, recs) = motorgraph::io::read_dataset(&f.root.join("data")).unwrap();
    let b = Checkpoint::load(&path).unwrap();
    for rec in recs.iter().take(5) {
        let g = a.model.featurizer.graph(rec).unwrap();
        assert_eq!(predict(&a.model.state, &g).unwrap(), predict(&b.model.state, &g).unwrap());
    }
    assert_eq!(a.split.test.len(), 15);
}

#[test]
fn evaluation_report_matches_prediction_recount() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "-q".to_string(),
            "evaluate".into(),
            "--checkpoint".into(),
            f.root.join("model").display().to_string(),
            "--dataset".into(),
            f.root.join("data").display().to_string(),
            "--out".into(),
            out.into(),
        ]
    };
    let a: Vec<String> = args("a");
    let b: Vec<String> = args("b");
    ok(dir.path(), &a.iter().map(String::as_str).collect::<Vec<_>>());
    ok(dir.path(), &b.iter().map(String::as_str).collect::<Vec<_>>());
    for file in ["report.csv", "report.txt", "predictions.csv", "config.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(file)).unwrap(),
            std::fs::read(dir.path().join("b").join(file)).unwrap(),
            "{file}"
        );
    }

    let (header, report) = read_csv(&dir.path().join("a/report.csv"));
    assert_eq!(header, ["variant", "dataset", "metric", "value"]);
    let cell = |dataset: &str, metric: &str| -> Option<f64> {
        let row = report.iter().find(|r| r["dataset"] == dataset && r["metric"] == metric).unwrap();
        row["value"].parse().ok()
    };

    let (_, preds) = read_csv(&dir.path().join("a/predictions.csv"));
    assert_eq!(preds.len(), 15);
    for dataset in DATASETS {
        let subset: Vec<_> = preds
            .iter()
            .filter(|p| dataset == "all" || p["true_family"] == "healthy" || p["true_family"] == dataset)
            .collect();
        let mut counts = BinaryCounts::default();
        let (mut detected, mut correct) = (0, 0);
        for p in &subset {
            let truth = p["true_family"] != "healthy";
            let pred = p["predicted_anomaly"] == "1";
            match (pred, truth) {
                (true, true) => counts.tp += 1,
                (false, false) => counts.tn += 1,
                (true, false) => counts.fp += 1,
                (false, true) => counts.fn_ += 1,
            }
            if truth && pred {
                detected += 1;
                correct += usize::from(p["predicted_family"] == p["true_family"]);
            }
        }
        let pct = |x: f64| 100.0 * x;
        assert_eq!(cell(dataset, "anomaly_accuracy"), counts.accuracy().ok().map(pct), "{dataset}");
        assert_eq!(cell(dataset, "anomaly_recall"), counts.recall().ok().map(pct), "{dataset}");
        assert_eq!(cell(dataset, "anomaly_f1"), counts.f1().ok().map(pct), "{dataset}");
        let type_acc = (detected > 0).then(|| pct(correct as f64 / detected as f64));
        assert_eq!(cell(dataset, "type_accuracy"), type_acc, "{dataset}");
    }
    let text = std::fs::read_to_string(dir.path().join("a/report.txt")).unwrap();
    assert!(text.contains("split train/val/test = 70/15/15"));
}

#[test]
fn diagnose_prints_the_documented_json() {
    let f = fixture();
    let ckpt = Checkpoint::load(&f.root.join("model/checkpoint.json")).unwrap();
    let manifest = read_manifest(&f.root.join("data")).unwrap();
    let healthy = manifest
        .recordings
        .iter()
        .find(|e| ckpt.split.test.contains(&e.id) && !e.label.is_fault())
        .expect("a healthy test recording");
    let csv = f.root.join("data").join(&healthy.file);
    let out = ok(&f.root, &["diagnose", "--checkpoint", "model", csv.to_str().unwrap()]);
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let keys: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        ["anomaly_probability", "decision", "recording", "severity_score", "type_distribution", "windows"]
    );
    let report: DiagnosisReport = serde_json::from_value(value).unwrap();
    assert_eq!(report.decision, "healthy");
    assert!(report.anomaly_probability < 0.5);
    let t = &report.type_distribution;
    assert!((t.eccentricity + t.bar_breakage + t.bearing - 1.0).abs() < 1e-12);

    let faulty = manifest
        .recordings
        .iter()
        .find(|e| ckpt.split.test.contains(&e.id) && e.label.severity == 1.0)
        .unwrap();
    let csv = f.root.join("data").join(&faulty.file);
    let out = ok(&f.root, &["diagnose", "--checkpoint", "model/checkpoint.json", csv.to_str().unwrap()]);
    let report: DiagnosisReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.decision, faulty.label.family().unwrap().name());
}

#[test]
fn diagnose_rejects_bad_recordings() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t,phase_a,phase_b,phase_c,vibration\n0,1,2,3,4\n0.0001,1,2,x,4\n").unwrap();
    let out = motorgraph(&f.root, &["diagnose", "--checkpoint", "model", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("io:") && msg.contains("line 3"), "{msg}");

    let fewer = dir.path().join("fewer.csv");
    std::fs::write(&fewer, "t,phase_a,phase_b\n0,1,2\n0.0001,1,2\n").unwrap();
    let out = motorgraph(&f.root, &["diagnose", "--checkpoint", "model", fewer.to_str().unwrap()]);
    let msg = stderr(&out);
    assert!(!out.status.success());
    assert!(msg.contains("channels") && msg.contains("vibration"), "{msg}");
}

#[test]
fn ablate_writes_four_variants_and_the_config_diff() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"seed": 3, "experiment": {"model": {"epochs": 5}}}"#).unwrap();
    let data = f.root.join("data");
    ok(
        dir.path(),
        &["-q", "--config", cfg.to_str().unwrap(), "ablate", "--dataset", data.to_str().unwrap(), "--out", "abl"],
    );
    let (_, rows) = read_csv(&dir.path().join("abl/report.csv"));
    let variants: std::collections::BTreeSet<&str> = rows.iter().map(|r| r["variant"].as_str()).collect();
    assert_eq!(variants.into_iter().collect::<Vec<_>>(), ["GNN-ASE", "GNN-ASE@1", "GNN-ASE@2", "GNN-ASE@3"]);
    assert!(rows.iter().all(|r| r["variant"] != "GNN-ASE@2" || r["metric"] != "severity_spearman" || r["value"] == "NA"));
    let text = std::fs::read_to_string(dir.path().join("abl/report.txt")).unwrap();
    assert!(text.lines().next().unwrap().starts_with("seed "), "{text}");

    let diff: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("abl/config_diff.json")).unwrap()).unwrap();
    let at1 = diff["GNN-ASE@1"].as_array().unwrap();
    assert_eq!(at1.len(), 1);
    assert_eq!(at1[0]["key"], "model.ablation");
    assert_eq!(at1[0]["base"], "full");
    assert_eq!(at1[0]["variant"], "no_reweight");
    assert!(dir.path().join("abl/config.json").is_file());
}
