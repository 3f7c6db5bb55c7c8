//! Run configuration: one JSON file with sections, overridable by flags.

use std::path::{Path, PathBuf};

use motorgraph::numerics::derive_seed;
use motorgraph::pipeline::ExperimentConfig;
use motorgraph::sim::{FaultModel, MachineSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CONFIG_ECHO_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub machine: MachineSpec,
    pub fault_model: FaultModel,
    /// Copies of the 100-recording condition grid, each with its own seed.
    pub replicates: usize,
    /// Additive white noise level; `null` for clean signals.
    pub noise_snr_db: Option<f64>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            machine: MachineSpec::default(),
            fault_model: FaultModel::default(),
            replicates: 3,
            noise_snr_db: Some(30.0),
        }
    }
}

/// Input and output locations. Flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub recording: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Every module seed is derived from it.
    pub seed: u64,
    pub simulation: SimulationConfig,
    pub experiment: ExperimentConfig,
    pub paths: PathsConfig,
}

/// Per-module seeds fanned out from the master seed with
/// [`derive_seed`]`(master, label)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    /// Parent of the per-replicate catalog seeds (`"simulate"`).
    pub simulate: u64,
    /// Split and augmentation parent (`"pipeline"`).
    pub pipeline: u64,
    /// Weight init, shuffling and dropout (`"model"`).
    pub model: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            simulate: derive_seed(master, "simulate"),
            pipeline: derive_seed(master, "pipeline"),
            model: derive_seed(master, "model"),
        }
    }

    pub fn replicate(&self, r: usize) -> u64 {
        derive_seed(self.simulate, &format!("replicate-{r}"))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
            origin: origin.to_string(),
            key: e.path().to_string(),
            detail: e.inner().to_string(),
        })
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::from_master(self.seed)
    }

    /// Fills in derived values so the echoed config is self-contained.
    pub fn resolve(mut self) -> CliResult<Self> {
        self.experiment.model.seed = self.seeds().model;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |key: &str, detail: String| CliError::Config {
            origin: "resolved config".into(),
            key: key.into(),
            detail,
        };
        self.simulation
            .machine
            .validate()
            .map_err(|e| bad("simulation.machine", e.to_string()))?;
        if self.simulation.replicates == 0 {
            return Err(bad("simulation.replicates", "must be at least 1".into()));
        }
        if let Some(snr) = self.simulation.noise_snr_db {
            if !snr.is_finite() {
                return Err(bad("simulation.noise_snr_db", format!("{snr} is not finite")));
            }
        }
        if let Some(f) = &self.experiment.filter {
            f.validate(self.simulation.machine.sample_rate)
                .map_err(|e| bad("experiment.filter", e.to_string()))?;
        }
        self.experiment
            .validate()
            .map_err(|e| bad("experiment", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        assert_eq!(RunConfig::parse("{}", "t").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_is_reported_with_its_path() {
        let err = RunConfig::parse(r#"{"experiment": {"model": {"learning_rat": 0.1}}}"#, "t").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("experiment.model"), "{msg}");
        assert!(msg.contains("learning_rat"), "{msg}");
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = RunConfig::parse(r#"{"seed": 9, "simulation": {"replicates": 1}}"#, "t").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.simulation.replicates, 1);
        assert_eq!(c.simulation.noise_snr_db, Some(30.0));
        assert_eq!(c.experiment, ExperimentConfig::default());
    }

    #[test]
    fn seeds_depend_only_on_master() {
        let a = Seeds::from_master(3);
        assert_eq!(a, Seeds::from_master(3));
        assert_ne!(a, Seeds::from_master(4));
        assert_ne!(a.simulate, a.model);
        assert_ne!(a.replicate(0), a.replicate(1));
        let r = RunConfig { seed: 3, ..Default::default() }.resolve().unwrap();
        assert_eq!(r.experiment.model.seed, a.model);
    }

    #[test]
    fn invalid_values_name_the_section() {
        let c = RunConfig::parse(r#"{"simulation": {"replicates": 0}}"#, "t").unwrap();
        assert!(c.resolve().unwrap_err().to_string().contains("simulation.replicates"));
    }
}
