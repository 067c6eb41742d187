//! Run configuration: one TOML file, overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ffm::evaluate::StudyConfig;
use ffm::forecast::ForecastConfig;
use ffm::fpca::ModelConfig;
use ffm::ingest::IngestConfig;
use ffm::simulate::FfmGenerator;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; all available cores when absent.
    pub workers: Option<usize>,
    pub data: DataConfig,
    pub ingest: IngestConfig,
    pub model: ModelConfig,
    pub forecast: ForecastConfig,
    pub study: StudyConfig,
    pub simulate: SimulateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: None,
            data: DataConfig::default(),
            ingest: IngestConfig::default(),
            model: ModelConfig::default(),
            forecast: ForecastConfig::default(),
            study: StudyConfig::default(),
            simulate: SimulateConfig::default(),
        }
    }
}

/// Input files. `dir` supplies `prices.csv`, `demand.csv` and an optional
/// `holidays.txt`; explicit paths take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dir: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub demand: Option<PathBuf>,
    pub wind: Option<PathBuf>,
    pub holidays: Option<PathBuf>,
    /// First day of the forecast sample; earlier days form the learning sample.
    pub forecast_start: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub days: usize,
    pub generator: FfmGenerator,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            days: 500,
            generator: FfmGenerator::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.forecast.validate()?;
        self.study.validate()?;
        self.simulate.generator.validate()?;
        if self.workers == Some(0) {
            return Err(CliError::Input("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Compute(format!("config snapshot: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trips() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[study]\nhorizon = [1]").is_err());
        assert!(toml::from_str::<RunConfig>("[study]\nhorizons = [1, 2]").is_ok());
    }
}
