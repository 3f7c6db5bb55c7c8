//! Trained-model checkpoints: a single JSON document holding the run
//! config, the split, the fitted featurizer and every parameter tensor as a
//! row-major array.

use std::path::Path;

use motorgraph::eval::Split;
use motorgraph::io::{read_json, write_json};
use motorgraph::pipeline::TrainedModel;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const CHECKPOINT_FORMAT: &str = "motorgraph-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub input_dim: usize,
    pub epoch: usize,
    /// Model seed (derived from the master seed in `config`).
    pub seed: u64,
    /// Recording ids per split.
    pub split: Split<String>,
    pub model: TrainedModel,
}

impl Checkpoint {
    pub fn new(config: RunConfig, split: Split<String>, model: TrainedModel) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            input_dim: model.state.input_dim(),
            epoch: model.state.epoch,
            seed: model.state.config.seed,
            config,
            split,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        Ok(write_json(path, self)?)
    }

    /// Loads and checks the header against the tensors it describes.
    pub fn load(path: &Path) -> CliResult<Self> {
        let ckpt: Checkpoint = read_json(path)?;
        let bad = |detail: String| CliError::Checkpoint { path: path.display().to_string(), detail };
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(bad(format!(
                "format {} v{} is not {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}",
                ckpt.format, ckpt.version
            )));
        }
        let dims = [ckpt.model.state.input_dim(), ckpt.model.featurizer.feature_dim()];
        if dims.iter().any(|&d| d != ckpt.input_dim) {
            return Err(motorgraph::Error::FeatureDimMismatch {
                expected: ckpt.input_dim,
                found: dims.into_iter().find(|&d| d != ckpt.input_dim).unwrap_or(0),
            }
            .into());
        }
        Ok(ckpt)
    }
}
