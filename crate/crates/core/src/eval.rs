//! Splitting, confusion-matrix accounting, metrics and the evaluation report.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::Ablation;
use crate::numerics::{derive_seed, Rng};
use crate::pipeline::{run_experiment, ExperimentConfig, ExperimentRun};
use crate::sim::{FaultFamily, FaultSpec, Recording};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.7, val: 0.15, test: 0.15 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let r = (self.train, self.val, self.test);
        let ok = [r.0, r.1, r.2].iter().all(|v| v.is_finite() && *v >= 0.0)
            && r.0 > 0.0
            && (r.0 + r.1 + r.2 - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidRatios(r))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Split<T> {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> Split<U> {
        Split {
            train: self.train.into_iter().map(&mut f).collect(),
            val: self.val.into_iter().map(&mut f).collect(),
            test: self.test.into_iter().map(&mut f).collect(),
        }
    }
}

/// Stratum of a label: fault kind (with subtype or site) and severity.
pub fn stratum_key(label: &FaultSpec) -> String {
    format!("{}-s{:04}", label.slug(), (label.severity * 1000.0).round() as u64)
}

/// Stratified split of item indices. Items are grouped by `keys`, shuffled
/// within each group, and group sizes are allocated with cumulative rounding
/// so the global split sizes track the ratios as closely as possible.
pub fn split_indices(keys: &[String], ratios: SplitRatios, seed: u64) -> Result<Split<usize>> {
    ratios.validate()?;
    if keys.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        strata.entry(k).or_default().push(i);
    }
    let mut split = Split::default();
    let (mut seen, mut given_train, mut given_val) = (0usize, 0usize, 0usize);
    for (key, mut members) in strata {
        Rng::new(derive_seed(seed, key)).shuffle(&mut members);
        seen += members.len();
        let train_target = (seen as f64 * ratios.train).round() as usize;
        let val_target = (seen as f64 * (ratios.train + ratios.val)).round() as usize - train_target;
        let n_train = train_target.saturating_sub(given_train).min(members.len());
        let n_val = val_target.saturating_sub(given_val).min(members.len() - n_train);
        given_train += n_train;
        given_val += n_val;
        split.train.extend_from_slice(&members[..n_train]);
        split.val.extend_from_slice(&members[n_train..n_train + n_val]);
        split.test.extend_from_slice(&members[n_train + n_val..]);
    }
    for part in [&mut split.train, &mut split.val, &mut split.test] {
        part.sort_unstable();
    }
    Ok(split)
}

/// Stratified split of labeled items by [`stratum_key`].
pub fn split<T: Clone>(items: &[T], label: impl Fn(&T) -> FaultSpec, ratios: SplitRatios, seed: u64) -> Result<Split<T>> {
    let keys: Vec<String> = items.iter().map(|t| stratum_key(&label(t))).collect();
    Ok(split_indices(&keys, ratios, seed)?.map(|i| items[i].clone()))
}

/// Accuracy, recall and F1. Absent entries had a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize, what: &'static str) -> Result<f64> {
    if den == 0 {
        Err(Error::UndefinedMetric(what))
    } else {
        Ok(num as f64 / den as f64)
    }
}

fn harmonic(precision: f64, recall: f64) -> Result<f64> {
    if precision + recall > 0.0 {
        Ok(2.0 * precision * recall / (precision + recall))
    } else {
        Err(Error::UndefinedMetric("f1"))
    }
}

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl BinaryCounts {
    /// Counts from `(predicted, actual)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Self::default();
        for (p, t) in pairs {
            match (p, t) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Same counts with the positive and negative labels exchanged.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, tn: self.tp, fp: self.fn_, fn_: self.fp }
    }

    pub fn accuracy(&self) -> Result<f64> {
        ratio(self.tp + self.tn, self.total(), "accuracy")
    }

    pub fn recall(&self) -> Result<f64> {
        ratio(self.tp, self.tp + self.fn_, "recall")
    }

    pub fn precision(&self) -> Result<f64> {
        ratio(self.tp, self.tp + self.fp, "precision")
    }

    pub fn f1(&self) -> Result<f64> {
        harmonic(self.precision()?, self.recall()?)
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            accuracy: self.accuracy().ok(),
            recall: self.recall().ok(),
            f1: self.f1().ok(),
        }
    }
}

/// Multi-class confusion counts, `counts[actual][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { counts: vec![vec![0; classes]; classes] }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, actual: usize, predicted: usize) {
        self.counts[actual][predicted] += 1;
    }

    pub fn count(&self, actual: usize, predicted: usize) -> usize {
        self.counts[actual][predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// One-vs-rest binary counts for `class`.
    pub fn one_vs_rest(&self, class: usize) -> BinaryCounts {
        let tp = self.counts[class][class];
        let actual: usize = self.counts[class].iter().sum();
        let predicted: usize = self.counts.iter().map(|r| r[class]).sum();
        BinaryCounts {
            tp,
            fn_: actual - tp,
            fp: predicted - tp,
            tn: self.total() + tp - actual - predicted,
        }
    }

    pub fn accuracy(&self) -> Result<f64> {
        let correct = (0..self.classes()).map(|k| self.counts[k][k]).sum();
        ratio(correct, self.total(), "accuracy")
    }

    fn macro_average(&self, per_class: impl Fn(&BinaryCounts) -> Result<f64>, what: &'static str) -> Result<f64> {
        let values: Vec<f64> = (0..self.classes())
            .filter_map(|k| per_class(&self.one_vs_rest(k)).ok())
            .collect();
        if values.is_empty() {
            return Err(Error::UndefinedMetric(what));
        }
        Ok(values.iter().sum::<f64>() / values.len() as f64)
    }

    /// Mean one-vs-rest recall over classes with support.
    pub fn macro_recall(&self) -> Result<f64> {
        self.macro_average(BinaryCounts::recall, "macro recall")
    }

    /// Mean one-vs-rest precision over classes that were predicted.
    pub fn macro_precision(&self) -> Result<f64> {
        self.macro_average(BinaryCounts::precision, "macro precision")
    }

    /// Harmonic mean of macro precision and macro recall.
    pub fn macro_f1(&self) -> Result<f64> {
        harmonic(self.macro_precision()?, self.macro_recall()?)
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            accuracy: self.accuracy().ok(),
            recall: self.macro_recall().ok(),
            f1: self.macro_f1().ok(),
        }
    }
}

/// Fractional ranks starting at 1; ties share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("spearman (constant input)"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch { op: "spearman", left: (x.len(), 1), right: (y.len(), 1) });
    }
    if x.len() < 2 {
        return Err(Error::UndefinedMetric("spearman (fewer than 2 samples)"));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Graph-level prediction for one test recording next to its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingPrediction {
    pub id: String,
    pub label: FaultSpec,
    pub anomaly_probability: f64,
    pub predicted_anomaly: bool,
    pub predicted_family: FaultFamily,
    pub severity: Option<f64>,
}

/// Dataset names of the per-family evaluation, plus the pooled `all`.
pub const DATASETS: [&str; 4] = ["eccentricity", "bar_breakage", "bearing", "all"];

pub fn dataset_name(family: Option<FaultFamily>) -> &'static str {
    match family {
        Some(f) => f.name(),
        None => "all",
    }
}

/// Metrics of one test subset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SubsetMetrics {
    pub anomaly: BinaryCounts,
    /// Type accuracy over the subset's detected faulty recordings. For a
    /// single family its recall and F1 are one-vs-rest on the pooled type
    /// confusion; for `all` they are macro averages.
    pub type_metrics: Metrics,
    pub detected_faulty: usize,
    pub severity_spearman: Option<f64>,
}

/// Evaluation of one model on one test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub type_confusion: ConfusionMatrix,
    /// Keyed by [`dataset_name`].
    pub subsets: BTreeMap<String, SubsetMetrics>,
}

/// Per-family evaluation: each family's subset holds its faulty recordings
/// plus every healthy one. Type metrics count only faulty recordings the
/// model flagged as anomalous. Severity is ranked over faulty recordings.
pub fn evaluate(predictions: &[RecordingPrediction]) -> Evaluation {
    let mut confusion = ConfusionMatrix::new(FaultFamily::ALL.len());
    for p in predictions {
        if let (Some(f), true) = (p.label.family(), p.predicted_anomaly) {
            confusion.add(f.index(), p.predicted_family.index());
        }
    }
    let mut subsets = BTreeMap::new();
    for family in FaultFamily::ALL.map(Some).into_iter().chain([None]) {
        let in_subset = |p: &&RecordingPrediction| match (family, p.label.family()) {
            (_, None) | (None, _) => true,
            (Some(a), Some(b)) => a == b,
        };
        let subset: Vec<&RecordingPrediction> = predictions.iter().filter(in_subset).collect();
        let anomaly = BinaryCounts::from_pairs(subset.iter().map(|p| (p.predicted_anomaly, p.label.is_fault())));
        let detected: Vec<&&RecordingPrediction> =
            subset.iter().filter(|p| p.label.is_fault() && p.predicted_anomaly).collect();
        let type_metrics = match family {
            None => confusion.metrics(),
            Some(f) => {
                let correct = detected.iter().filter(|p| p.predicted_family == f).count();
                let ovr = confusion.one_vs_rest(f.index());
                Metrics {
                    accuracy: ratio(correct, detected.len(), "type accuracy").ok(),
                    recall: ovr.recall().ok(),
                    f1: ovr.f1().ok(),
                }
            }
        };
        let (pred, truth): (Vec<f64>, Vec<f64>) = subset
            .iter()
            .filter(|p| p.label.is_fault())
            .filter_map(|p| p.severity.map(|s| (s, p.label.severity)))
            .unzip();
        subsets.insert(
            dataset_name(family).to_string(),
            SubsetMetrics {
                anomaly,
                type_metrics,
                detected_faulty: detected.len(),
                severity_spearman: spearman(&pred, &truth).ok(),
            },
        );
    }
    Evaluation { type_confusion: confusion, subsets }
}

impl Evaluation {
    /// Mean anomaly F1 across the three fault families. Absent if any
    /// family's F1 is undefined.
    pub fn mean_family_f1(&self) -> Option<f64> {
        let mut sum = 0.0;
        for f in FaultFamily::ALL {
            sum += self.subsets.get(f.name())?.anomaly.f1().ok()?;
        }
        Some(sum / FaultFamily::ALL.len() as f64)
    }

    /// `(metric, value)` cells in report order; percent for accuracy, recall
    /// and F1, raw coefficient for Spearman.
    pub fn cells(&self, dataset: &str) -> Vec<(&'static str, Option<f64>)> {
        let Some(s) = self.subsets.get(dataset) else { return Vec::new() };
        let pct = |v: Option<f64>| v.map(|x| 100.0 * x);
        let a = s.anomaly.metrics();
        vec![
            ("anomaly_accuracy", pct(a.accuracy)),
            ("anomaly_recall", pct(a.recall)),
            ("anomaly_f1", pct(a.f1)),
            ("type_accuracy", pct(s.type_metrics.accuracy)),
            ("type_recall", pct(s.type_metrics.recall)),
            ("type_f1", pct(s.type_metrics.f1)),
            ("severity_spearman", s.severity_spearman),
        ]
    }
}

/// One evaluated model in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: String,
    pub has_severity: bool,
    pub evaluation: Evaluation,
}

/// Per-variant, per-dataset metric grid with the provenance needed to
/// reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub split_sizes: (usize, usize, usize),
    pub variants: Vec<VariantResult>,
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

impl EvalReport {
    /// `(variant, dataset, metric, value)` rows. Severity correlation is
    /// omitted for variants without a severity head.
    pub fn rows(&self) -> Vec<(String, &'static str, &'static str, Option<f64>)> {
        let mut out = Vec::new();
        for v in &self.variants {
            for dataset in DATASETS {
                for (metric, value) in v.evaluation.cells(dataset) {
                    if metric == "severity_spearman" && !v.has_severity {
                        continue;
                    }
                    out.push((v.variant.clone(), dataset, metric, value));
                }
            }
        }
        out
    }

    /// CSV with header `variant,dataset,metric,value`; undefined values are `NA`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Format { path: "<report csv>".into(), detail: e.to_string() };
        w.write_record(["variant", "dataset", "metric", "value"]).map_err(err)?;
        for (variant, dataset, metric, value) in self.rows() {
            w.write_record([variant.as_str(), dataset, metric, &fmt_value(value)]).map_err(err)?;
        }
        w.flush().map_err(|e| Error::Format { path: "<report csv>".into(), detail: e.to_string() })?;
        Ok(())
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (tr, va, te) = self.split_sizes;
        writeln!(f, "seed {}  split train/val/test = {tr}/{va}/{te}", self.seed)?;
        writeln!(f, "accuracy, recall and F1 in percent; NA = undefined")?;
        let metrics = [
            "anomaly_accuracy",
            "anomaly_recall",
            "anomaly_f1",
            "type_accuracy",
            "type_recall",
            "type_f1",
            "severity_spearman",
        ];
        write!(f, "{:<11} {:<13}", "variant", "dataset")?;
        for m in metrics {
            write!(f, " {m:>17}")?;
        }
        writeln!(f)?;
        for v in &self.variants {
            for dataset in DATASETS {
                write!(f, "{:<11} {:<13}", v.variant, dataset)?;
                for (metric, value) in v.evaluation.cells(dataset) {
                    let text = match value {
                        Some(x) if metric == "severity_spearman" && v.has_severity => format!("{x:.3}"),
                        Some(x) if metric != "severity_spearman" => format!("{x:.1}"),
                        _ if metric == "severity_spearman" && !v.has_severity => "-".to_string(),
                        _ => "NA".to_string(),
                    };
                    write!(f, " {text:>17}")?;
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

/// Trains and tests every ablation variant on the same split and seeds.
/// Variants run in parallel; results are in [`Ablation::ALL`] order.
pub fn run_ablation(recordings: &[Recording], base: &ExperimentConfig, seed: u64) -> Result<(EvalReport, Vec<ExperimentRun>)> {
    let families: Vec<FaultFamily> = recordings.iter().filter_map(|r| r.label.family()).collect();
    if let Some(missing) = FaultFamily::ALL.into_iter().find(|f| !families.contains(f)) {
        return Err(Error::InvalidSpec {
            what: "catalog",
            detail: format!("no {missing} recordings; the ablation needs every fault family"),
        });
    }
    let runs = Ablation::ALL
        .into_par_iter()
        .map(|ablation| {
            let mut config = base.clone();
            config.model.ablation = ablation;
            run_experiment(recordings, &config, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let variants = Ablation::ALL
        .iter()
        .zip(&runs)
        .map(|(ablation, run)| VariantResult {
            variant: ablation.display_name().to_string(),
            has_severity: ablation.has_severity(),
            evaluation: run.evaluation.clone(),
        })
        .collect();
    let split_sizes = runs.first().map_or((0, 0, 0), |r| r.split_sizes);
    Ok((EvalReport { seed, split_sizes, variants }, runs))
}
