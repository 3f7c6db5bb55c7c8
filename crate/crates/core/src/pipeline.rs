//! Recording-to-prediction plumbing shared by training, evaluation and
//! diagnosis: filtering, windowed featurization, standardization, graph
//! construction, splitting and augmentation.

use serde::{Deserialize, Serialize};

use crate::eval::{self, Evaluation, RecordingPrediction, Split, SplitRatios};
use crate::features::{extract_windows, FeatureOptions, FeatureSet, Standardizer, WindowSpec};
use crate::graph::{build_graph, SignalGraph};
use crate::model::{predict, train, Ablation, ModelConfig, ModelState, TrainingLog};
use crate::numerics::derive_seed;
use crate::preprocess::{augment_dataset, filter_recording, AugmentationSpec, FilterSpec};
use crate::sim::Recording;
use crate::{Error, Result};

/// Everything between raw recordings and a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Low-pass applied to every channel before featurization; `null` skips it.
    pub filter: Option<FilterSpec>,
    pub window: WindowSpec,
    /// Use `max |x|` for the peak feature.
    pub absolute_peak: bool,
    /// Similarity neighbors per node in the window graph.
    pub k: usize,
    /// Applied to the training split only; `copies = 0` disables it. The
    /// default keeps shift and noise but fixes the amplitude scale at 1.
    pub augmentation: AugmentationSpec,
    pub split: SplitRatios,
    pub model: ModelConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            filter: Some(FilterSpec::default()),
            window: WindowSpec::default(),
            absolute_peak: false,
            k: 4,
            augmentation: AugmentationSpec {
                scale_min: 1.0,
                scale_max: 1.0,
                ..AugmentationSpec::default()
            },
            split: SplitRatios::default(),
            model: ModelConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.split.validate()?;
        self.model.validate()
    }

    pub fn feature_options(&self) -> FeatureOptions {
        FeatureOptions {
            set: match self.model.ablation {
                Ablation::NoFreqFeatures => FeatureSet::TimeOnly,
                _ => FeatureSet::Full,
            },
            absolute_peak: self.absolute_peak,
        }
    }
}

/// Fitted recording-to-graph transform. Stored with a trained model so that
/// unseen recordings are featurized exactly like the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub filter: Option<FilterSpec>,
    pub window: WindowSpec,
    pub options: FeatureOptions,
    pub k: usize,
    pub channels: Vec<String>,
    pub sample_rate: f64,
    pub standardizer: Standardizer,
}

fn check_channels(rec: &Recording, expected: &[String]) -> Result<()> {
    let found = rec.channel_names();
    if found != expected {
        return Err(Error::ChannelMismatch {
            path: rec.id.clone(),
            expected: expected.to_vec(),
            found,
        });
    }
    Ok(())
}

fn filtered(rec: &Recording, filter: Option<&FilterSpec>) -> Result<Recording> {
    match filter {
        Some(f) => filter_recording(rec, f),
        None => Ok(rec.clone()),
    }
}

impl Featurizer {
    /// Fits the standardizer on every window of `training` (already filtered).
    fn fit(training: &[Recording], config: &ExperimentConfig) -> Result<Self> {
        let first = training.first().ok_or(Error::EmptyDataset)?;
        let channels = first.channel_names();
        let options = config.feature_options();
        let mut rows = Vec::new();
        for rec in training {
            check_channels(rec, &channels)?;
            rows.extend(extract_windows(rec, &config.window, &options)?.into_iter().map(|w| w.x));
        }
        let standardizer = Standardizer::fit(rows.iter().map(Vec::as_slice))?;
        Ok(Self {
            filter: config.filter,
            window: config.window,
            options,
            k: config.k,
            channels,
            sample_rate: first.sample_rate,
            standardizer,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.standardizer.dim()
    }

    fn graph_of_filtered(&self, rec: &Recording) -> Result<SignalGraph> {
        check_channels(rec, &self.channels)?;
        let mut windows = extract_windows(rec, &self.window, &self.options)?;
        for w in &mut windows {
            w.x = self.standardizer.apply(&w.x)?;
        }
        build_graph(rec.id.clone(), windows, self.k, &rec.label)
    }

    /// Filters, featurizes, standardizes and links one recording.
    pub fn graph(&self, rec: &Recording) -> Result<SignalGraph> {
        self.graph_of_filtered(&filtered(rec, self.filter.as_ref())?)
    }
}

/// A trained model with the transform its inputs need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub featurizer: Featurizer,
    pub state: ModelState,
}

impl TrainedModel {
    pub fn predict_graph(&self, graph: &SignalGraph) -> Result<RecordingPrediction> {
        let d = predict(&self.state, graph)?.decision();
        Ok(RecordingPrediction {
            id: graph.id.clone(),
            label: graph.label,
            anomaly_probability: d.anomaly_probability,
            predicted_anomaly: d.is_anomaly,
            predicted_family: d.family,
            severity: d.severity,
        })
    }
}

/// Recordings split by label stratum; index lists into the input.
pub fn split_recordings(recordings: &[Recording], ratios: SplitRatios, seed: u64) -> Result<Split<usize>> {
    let keys: Vec<String> = recordings.iter().map(|r| eval::stratum_key(&r.label)).collect();
    eval::split_indices(&keys, ratios, derive_seed(seed, "split"))
}

/// Filtered, featurized graphs for each split plus the fitted transform.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub featurizer: Featurizer,
    pub graphs: Split<SignalGraph>,
}

/// Filters all recordings, augments the training split, fits the
/// standardizer on training windows and builds every graph.
pub fn prepare(recordings: &[Recording], split: &Split<usize>, config: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    config.validate()?;
    let filter = config.filter.as_ref();
    let pick = |idx: &[usize]| -> Result<Vec<Recording>> {
        idx.iter().map(|&i| filtered(&recordings[i], filter)).collect()
    };
    let train_recs = augment_dataset(&pick(&split.train)?, &config.augmentation, derive_seed(seed, "augment"))?;
    let featurizer = Featurizer::fit(&train_recs, config)?;
    let build = |recs: &[Recording]| -> Result<Vec<SignalGraph>> {
        recs.iter().map(|r| featurizer.graph_of_filtered(r)).collect()
    };
    let graphs = Split {
        train: build(&train_recs)?,
        val: build(&pick(&split.val)?)?,
        test: build(&pick(&split.test)?)?,
    };
    Ok(Prepared { featurizer, graphs })
}

/// Result of training and testing one model.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub model: TrainedModel,
    pub log: TrainingLog,
    pub predictions: Vec<RecordingPrediction>,
    pub evaluation: Evaluation,
    /// Recording counts before augmentation.
    pub split_sizes: (usize, usize, usize),
}

/// Split, prepare, train and evaluate on the test split.
pub fn run_experiment(recordings: &[Recording], config: &ExperimentConfig, seed: u64) -> Result<ExperimentRun> {
    let split = split_recordings(recordings, config.split, seed)?;
    let prepared = prepare(recordings, &split, config, seed)?;
    let mut train_graphs = prepared.graphs.train;
    let (state, log) = train(&mut train_graphs, &prepared.graphs.val, &config.model)?;
    let model = TrainedModel { featurizer: prepared.featurizer, state };
    let predictions = prepared
        .graphs
        .test
        .iter()
        .map(|g| model.predict_graph(g))
        .collect::<Result<Vec<_>>>()?;
    let evaluation = eval::evaluate(&predictions);
    Ok(ExperimentRun { model, log, predictions, evaluation, split_sizes: split.sizes() })
}
