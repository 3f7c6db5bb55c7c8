//! The five subcommands. Each takes a resolved [`RunConfig`] and explicit
//! paths, validates every path before doing work and echoes the config into
//! its output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use motorgraph::eval::{self, run_ablation, EvalReport, RecordingPrediction, VariantResult};
use motorgraph::io::{self as dataio, read_recording_csv, write_json, DatasetInfo, Manifest, MANIFEST_FILE};
use motorgraph::model::{predict, train, Ablation, TrainingLog};
use motorgraph::pipeline::{prepare, split_recordings, ExperimentConfig, TrainedModel};
use motorgraph::sim::{FaultFamily, FaultSpec, OperatingPoint, Recording, Simulator};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CHECKPOINT_FILE};
use crate::config::{RunConfig, CONFIG_ECHO_FILE};
use crate::error::{CliError, CliResult};

pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const CONFIG_DIFF_FILE: &str = "config_diff.json";

/// Progress messages go to standard error unless quiet.
#[derive(Debug, Clone, Copy, Default)]
pub struct Console {
    pub quiet: bool,
}

impl Console {
    pub fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn require_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(CliError::io(
            p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "parent directory does not exist"),
        )),
        _ => Ok(()),
    }
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")))
    }
}

fn require_dataset(dir: &Path) -> CliResult<()> {
    require_file(&dir.join(MANIFEST_FILE))
}

fn create_out_dir(dir: &Path) -> CliResult<()> {
    require_parent(dir)?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn echo_config(dir: &Path, config: &RunConfig) -> CliResult<()> {
    Ok(write_json(&dir.join(CONFIG_ECHO_FILE), config)?)
}

/// Accepts either a checkpoint file or a training output directory.
pub fn checkpoint_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(CHECKPOINT_FILE)
    } else {
        path.to_path_buf()
    }
}

/// `fault slug` plus rounded severity percent, e.g. `brb-2-s067`.
pub fn condition_name(label: &FaultSpec) -> String {
    format!("{}-s{:03}", label.slug(), (label.severity * 100.0).round() as u32)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub recordings: usize,
    pub per_condition: BTreeMap<String, usize>,
}

/// All replicates of the condition grid, ids prefixed `rep{r}-`.
pub fn simulate_catalog(config: &RunConfig) -> CliResult<Vec<Recording>> {
    let sim_cfg = &config.simulation;
    let sim = Simulator::new(sim_cfg.machine.clone(), sim_cfg.fault_model.clone());
    let seeds = config.seeds();
    let mut recordings = Vec::new();
    for r in 0..sim_cfg.replicates {
        let catalog = sim.generate_catalog(seeds.replicate(r), sim_cfg.noise_snr_db)?;
        recordings.extend(catalog.into_iter().map(|mut rec| {
            rec.id = format!("rep{r}-{}", rec.id);
            rec
        }));
    }
    Ok(recordings)
}

/// Synthesizes `replicates` copies of the condition grid into `out`.
pub fn cmd_simulate(config: &RunConfig, out: &Path, console: Console) -> CliResult<SimulateSummary> {
    require_parent(out)?;
    let recordings = simulate_catalog(config)?;
    let sim_cfg = &config.simulation;
    let info = DatasetInfo {
        machine: sim_cfg.machine.clone(),
        fault_model: sim_cfg.fault_model.clone(),
        noise_snr_db: sim_cfg.noise_snr_db,
        seed: config.seed,
        replicates: sim_cfg.replicates,
    };
    dataio::write_dataset(out, &info, &recordings)?;
    echo_config(out, config)?;

    let mut per_condition = BTreeMap::new();
    for rec in &recordings {
        *per_condition.entry(condition_name(&rec.label)).or_insert(0) += 1;
    }
    console.note(format!("wrote {} recordings to {}", recordings.len(), out.display()));
    for (name, count) in &per_condition {
        console.note(format!("  {name:<24} {count}"));
    }
    Ok(SimulateSummary { recordings: recordings.len(), per_condition })
}

fn load_dataset(dir: &Path) -> CliResult<(Manifest, Vec<Recording>)> {
    let (manifest, recs) = dataio::read_dataset(dir)?;
    if recs.is_empty() {
        return Err(CliError::Dataset { path: dir.display().to_string(), detail: "no recordings".into() });
    }
    Ok((manifest, recs))
}

pub fn write_training_log(path: &Path, log: &TrainingLog) -> CliResult<()> {
    let io_err = |e: csv::Error| CliError::Io { path: path.display().to_string(), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(["epoch", "train_loss", "anomaly_loss", "severity_loss", "type_loss", "val_accuracy"])
        .map_err(io_err)?;
    for e in &log.epochs {
        let l = &e.train_loss;
        w.write_record([
            e.epoch.to_string(),
            l.total.to_string(),
            l.anomaly.to_string(),
            l.severity.to_string(),
            l.type_ce.to_string(),
            e.val_anomaly_accuracy.map_or(String::new(), |v| v.to_string()),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Splits, preprocesses and trains; writes the checkpoint and epoch log.
pub fn cmd_train(config: &RunConfig, dataset: &Path, out: &Path, console: Console) -> CliResult<Checkpoint> {
    require_dataset(dataset)?;
    require_parent(out)?;
    let (_, recs) = load_dataset(dataset)?;
    let exp = &config.experiment;
    let seeds = config.seeds();
    let split = split_recordings(&recs, exp.split, seeds.pipeline)?;
    let (tr, va, te) = split.sizes();
    console.note(format!("split train/val/test = {tr}/{va}/{te} recordings"));
    let prepared = prepare(&recs, &split, exp, seeds.pipeline)?;
    let mut train_graphs = prepared.graphs.train;
    console.note(format!(
        "training {} on {} graphs for {} epochs",
        exp.model.ablation.display_name(),
        train_graphs.len(),
        exp.model.epochs
    ));
    let (state, log) = train(&mut train_graphs, &prepared.graphs.val, &exp.model)?;
    if let Some(last) = log.epochs.last() {
        console.note(format!(
            "epoch {}: loss {:.4}, val accuracy {}",
            last.epoch,
            last.train_loss.total,
            last.val_anomaly_accuracy.map_or("n/a".into(), |a| format!("{a:.3}"))
        ));
    }
    let ids = split.map(|i| recs[i].id.clone());
    let ckpt = Checkpoint::new(config.clone(), ids, TrainedModel { featurizer: prepared.featurizer, state });

    create_out_dir(out)?;
    ckpt.save(&out.join(CHECKPOINT_FILE))?;
    write_training_log(&out.join(TRAINING_LOG_FILE), &log)?;
    echo_config(out, config)?;
    console.note(format!("wrote {}", out.join(CHECKPOINT_FILE).display()));
    Ok(ckpt)
}

pub fn write_predictions(path: &Path, preds: &[RecordingPrediction]) -> CliResult<()> {
    let io_err = |e: csv::Error| CliError::Io { path: path.display().to_string(), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record([
        "id",
        "true_family",
        "true_severity",
        "anomaly_probability",
        "predicted_anomaly",
        "predicted_family",
        "predicted_severity",
    ])
    .map_err(io_err)?;
    for p in preds {
        w.write_record([
            p.id.clone(),
            p.label.family().map_or("healthy", FaultFamily::name).to_string(),
            p.label.severity.to_string(),
            p.anomaly_probability.to_string(),
            u8::from(p.predicted_anomaly).to_string(),
            p.predicted_family.name().to_string(),
            p.severity.map_or(String::new(), |s| s.to_string()),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_report(dir: &Path, report: &EvalReport) -> CliResult<()> {
    let csv_path = dir.join(REPORT_CSV_FILE);
    let file = fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    report.write_csv(std::io::BufWriter::new(file))?;
    let txt_path = dir.join(REPORT_TEXT_FILE);
    fs::write(&txt_path, report.to_string()).map_err(|e| CliError::io(&txt_path, e))
}

/// Scores a checkpoint on the test recordings it was split with.
pub fn cmd_evaluate(checkpoint: &Path, dataset: &Path, out: &Path, console: Console) -> CliResult<EvalReport> {
    let checkpoint = checkpoint_path(checkpoint);
    require_file(&checkpoint)?;
    require_dataset(dataset)?;
    require_parent(out)?;
    let ckpt = Checkpoint::load(&checkpoint)?;
    let (_, recs) = load_dataset(dataset)?;
    let by_id: BTreeMap<&str, &Recording> = recs.iter().map(|r| (r.id.as_str(), r)).collect();
    let test = ckpt
        .split
        .test
        .iter()
        .map(|id| {
            by_id.get(id.as_str()).copied().ok_or_else(|| CliError::Dataset {
                path: dataset.display().to_string(),
                detail: format!("test recording {id} from the checkpoint is missing"),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let predictions = test
        .iter()
        .map(|rec| {
            let graph = ckpt.model.featurizer.graph(rec)?;
            ckpt.model.predict_graph(&graph)
        })
        .collect::<motorgraph::Result<Vec<_>>>()?;
    let ablation = ckpt.model.state.config.ablation;
    let report = EvalReport {
        seed: ckpt.config.seeds().pipeline,
        split_sizes: ckpt.split.sizes(),
        variants: vec![VariantResult {
            variant: ablation.display_name().to_string(),
            has_severity: ablation.has_severity(),
            evaluation: eval::evaluate(&predictions),
        }],
    };
    create_out_dir(out)?;
    write_predictions(&out.join(PREDICTIONS_FILE), &predictions)?;
    write_report(out, &report)?;
    echo_config(out, &ckpt.config)?;
    console.note(report.to_string());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeDistribution {
    pub eccentricity: f64,
    pub bar_breakage: f64,
    pub bearing: f64,
}

/// Output of `diagnose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosisReport {
    pub recording: String,
    pub windows: usize,
    pub anomaly_probability: f64,
    /// `null` for a model without a severity head.
    pub severity_score: Option<f64>,
    /// Fault type probabilities, meaningful when the decision is a fault.
    pub type_distribution: TypeDistribution,
    /// `"healthy"` or the predicted fault family.
    pub decision: String,
}

/// Diagnoses one recording CSV with a trained checkpoint.
pub fn cmd_diagnose(checkpoint: &Path, recording: &Path) -> CliResult<DiagnosisReport> {
    let checkpoint = checkpoint_path(checkpoint);
    require_file(&checkpoint)?;
    require_file(recording)?;
    let ckpt = Checkpoint::load(&checkpoint)?;
    let featurizer = &ckpt.model.featurizer;
    let table = read_recording_csv(recording)?;
    let found: Vec<String> = table.channels.iter().map(|c| c.name.clone()).collect();
    if found != featurizer.channels {
        return Err(motorgraph::Error::ChannelMismatch {
            path: recording.display().to_string(),
            expected: featurizer.channels.clone(),
            found,
        }
        .into());
    }
    let sample_rate = table.sample_rate().ok_or_else(|| motorgraph::Error::Format {
        path: recording.display().to_string(),
        detail: "cannot infer a sample rate from the t column".into(),
    })?;
    if (sample_rate - featurizer.sample_rate).abs() > 1e-6 * featurizer.sample_rate {
        return Err(motorgraph::Error::Format {
            path: recording.display().to_string(),
            detail: format!("sample rate {sample_rate} Hz, model expects {} Hz", featurizer.sample_rate),
        }
        .into());
    }
    let id = recording.file_stem().map_or("recording".into(), |s| s.to_string_lossy().into_owned());
    let rec = Recording {
        id,
        channels: table.channels,
        sample_rate,
        label: FaultSpec::healthy(),
        operating_point: OperatingPoint { load_torque: 0.0, slip: 0.0 },
        seed: 0,
    };
    let graph = featurizer.graph(&rec)?;
    let diagnosis = predict(&ckpt.model.state, &graph)?;
    let d = diagnosis.decision();
    let p = |f: FaultFamily| d.type_distribution.get(f.index()).copied().unwrap_or(0.0);
    Ok(DiagnosisReport {
        recording: recording.display().to_string(),
        windows: diagnosis.node_count(),
        anomaly_probability: d.anomaly_probability,
        severity_score: d.severity,
        type_distribution: TypeDistribution {
            eccentricity: p(FaultFamily::Eccentricity),
            bar_breakage: p(FaultFamily::BarBreakage),
            bearing: p(FaultFamily::Bearing),
        },
        decision: if d.is_anomaly { d.family.name().to_string() } else { "healthy".to_string() },
    })
}

/// Keys whose values differ between two JSON trees, as dotted paths.
pub fn json_diff(base: &serde_json::Value, other: &serde_json::Value) -> BTreeMap<String, (serde_json::Value, serde_json::Value)> {
    fn walk(
        prefix: &str,
        a: &serde_json::Value,
        b: &serde_json::Value,
        out: &mut BTreeMap<String, (serde_json::Value, serde_json::Value)>,
    ) {
        match (a, b) {
            (serde_json::Value::Object(x), serde_json::Value::Object(y)) => {
                let keys: std::collections::BTreeSet<&String> = x.keys().chain(y.keys()).collect();
                for k in keys {
                    let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    let null = serde_json::Value::Null;
                    walk(&path, x.get(k).unwrap_or(&null), y.get(k).unwrap_or(&null), out);
                }
            }
            _ if a != b => {
                out.insert(prefix.to_string(), (a.clone(), b.clone()));
            }
            _ => {}
        }
    }
    let mut out = BTreeMap::new();
    walk("", base, other, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantDiff {
    pub key: String,
    pub base: serde_json::Value,
    pub variant: serde_json::Value,
}

/// Experiment-config differences of every variant from the full model.
pub fn ablation_config_diff(base: &ExperimentConfig) -> BTreeMap<String, Vec<VariantDiff>> {
    let mut full = base.clone();
    full.model.ablation = Ablation::Full;
    let full_json = serde_json::to_value(&full).expect("config serializes");
    Ablation::ALL
        .into_iter()
        .filter(|a| *a != Ablation::Full)
        .map(|a| {
            let mut c = full.clone();
            c.model.ablation = a;
            let diff = json_diff(&full_json, &serde_json::to_value(&c).expect("config serializes"));
            let entries = diff
                .into_iter()
                .map(|(key, (base, variant))| VariantDiff { key, base, variant })
                .collect();
            (a.display_name().to_string(), entries)
        })
        .collect()
}

/// Trains and tests all four variants on one shared split and seed.
pub fn cmd_ablate(config: &RunConfig, dataset: &Path, out: &Path, console: Console) -> CliResult<EvalReport> {
    require_dataset(dataset)?;
    require_parent(out)?;
    let (_, recs) = load_dataset(dataset)?;
    console.note(format!("ablation over {} recordings", recs.len()));
    let (report, _) = run_ablation(&recs, &config.experiment, config.seeds().pipeline)?;
    create_out_dir(out)?;
    write_report(out, &report)?;
    write_json(&out.join(CONFIG_DIFF_FILE), &ablation_config_diff(&config.experiment))?;
    echo_config(out, config)?;
    console.note(report.to_string());
    Ok(report)
}
