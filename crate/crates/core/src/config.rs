//! Versioned run configuration. Every field is required; unknown fields are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::ControllerGains;
use crate::error::{Error, Result};
use crate::eval::BenchmarkConfig;
use crate::infer::SchedulerMode;
use crate::plant::PlantParams;
use crate::policy::TrainConfig;
use crate::teach::TeachConfig;
use crate::types::NormalizationConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub plant: PlantParams,
    pub gains: ControllerGains,
    pub normalization: NormalizationConfig,
    pub teach: TeachConfig,
    pub train: TrainConfig,
    pub benchmark: BenchmarkConfig,
    pub scheduler_mode: SchedulerMode,
    pub output_root: String,
    pub global_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let plant = PlantParams::default();
        RunConfig {
            schema_version: SCHEMA_VERSION,
            gains: ControllerGains::for_plant(&plant, 1.0),
            plant,
            normalization: NormalizationConfig::default(),
            teach: TeachConfig::default(),
            train: TrainConfig::default(),
            benchmark: BenchmarkConfig::default(),
            scheduler_mode: SchedulerMode::PaperCarry,
            output_root: "runs".into(),
            global_seed: 2024,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.plant.validate()?;
        self.gains.validate()?;
        self.normalization.validate()?;
        self.teach.validate()?;
        self.train.validate()?;
        self.benchmark.validate()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
