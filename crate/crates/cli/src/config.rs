use std::path::Path;

use lobfactor_core::calibration::{
    sha256_hex, ParameterGrid, REFERENCE_CLOUD_SIZE, REFERENCE_SAMPLES, REFERENCE_SETS,
    STUDENT_T_DOF, SYNTHETIC_PATH_POOL,
};
use lobfactor_core::engine::SimulationConfig;
use lobfactor_core::timegrid::PathShape;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Experiment-level settings. `simulation.seed` doubles as the base seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    pub trials: usize,
    /// Synthetic Student-t reference sets used when no reference bars are given.
    pub reference_sets: usize,
    pub reference_samples: usize,
    pub reference_dof: f64,
    /// Tail points kept per ingested reference dataset.
    pub reference_cloud_size: usize,
    /// Seeds the reference samplers; independent of the trial seeds.
    pub reference_seed: u64,
    /// Synthetic transaction paths used when no count file is given.
    pub path_pool_size: usize,
    pub path_shape: PathShape,
    pub path_seed: u64,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            trials: 100,
            reference_sets: REFERENCE_SETS,
            reference_samples: REFERENCE_SAMPLES,
            reference_dof: STUDENT_T_DOF,
            reference_cloud_size: REFERENCE_CLOUD_SIZE,
            reference_seed: 20_240_101,
            path_pool_size: SYNTHETIC_PATH_POOL,
            path_shape: PathShape::UShape,
            path_seed: 7,
        }
    }
}

impl ExperimentSettings {
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("experiment.trials", self.trials),
            ("experiment.reference_sets", self.reference_sets),
            ("experiment.reference_samples", self.reference_samples),
            ("experiment.reference_cloud_size", self.reference_cloud_size),
            ("experiment.path_pool_size", self.path_pool_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(CliError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.reference_dof.is_finite() && self.reference_dof > 0.0) {
            return Err(CliError::Config(
                "experiment.reference_dof must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The single JSON document every command reads. No field has a default,
/// so a missing key is reported by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub simulation: SimulationConfig,
    pub grid: ParameterGrid,
    pub experiment: ExperimentSettings,
}

impl RunConfig {
    /// Reads `path`, or the built-in defaults when `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let config = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_json(&text).map_err(|e| match e {
                    CliError::Config(msg) => CliError::Config(format!("{}: {msg}", p.display())),
                    other => other,
                })?
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.simulation.validate()?;
        self.grid.validate()?;
        self.experiment.validate()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form; field order is fixed by the types.
    pub fn digest(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        )
    }

    pub fn base_seed(&self) -> u64 {
        self.simulation.seed
    }

    pub fn with_overrides(
        mut self,
        seed: Option<u64>,
        trials: Option<usize>,
    ) -> Result<Self, CliError> {
        if let Some(s) = seed {
            self.simulation.seed = s;
        }
        if let Some(t) = trials {
            self.experiment.trials = t;
        }
        self.validate()?;
        Ok(self)
    }
}
