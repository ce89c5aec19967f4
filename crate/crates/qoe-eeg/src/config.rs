//! Run configuration for the command-line orchestrator.
//!
//! One JSON document describes a whole run: how to synthesize the dataset,
//! which factor to label by, the model and training settings, the grid
//! axes, and the ablations. Every field has a default, so `{}` is a valid
//! config and experiments usually override just a few values. Unknown keys
//! are rejected rather than ignored; a typo that silently fell back to a
//! default would be a miserable thing to debug.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::dataset::QoEFactor;
use crate::ingest::{IngestError, SynthDatasetSpec};
use crate::nn::{ModelConfig, NnError};
use crate::train::{AblationSpec, GridAxes, TrainConfig, TrainError};

/// Everything a run needs beyond its output directory and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// QoE factor whose binned ratings become the labels.
    pub factor: QoEFactor,
    /// Number of recordings to synthesize.
    pub recordings: usize,
    pub synth: SynthDatasetSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub grid: GridAxes,
    pub ablations: Vec<AblationSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            factor: QoEFactor::VQ,
            recordings: 12,
            synth: SynthDatasetSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            grid: GridAxes::standard(),
            ablations: AblationSpec::all(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.recordings == 0 {
            return Err(ConfigError::Invalid {
                detail: "recordings must be at least 1".into(),
            });
        }
        self.synth.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        for spec in &self.ablations {
            spec.columns()?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_path_buf(), source: e })?;
        parse_run_config_json(&text)
    }
}

/// Parses and validates a run config from JSON.
pub fn parse_run_config_json(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = serde_json::from_str(text)
        .map_err(|e| ConfigError::Invalid { detail: e.to_string() })?;
    config.validate()?;
    Ok(config)
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("bad run config: {detail}")]
    Invalid { detail: String },

    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error(transparent)]
    Train(#[from] TrainError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Architecture;

    #[test]
    fn empty_document_is_the_default_config() {
        let config = parse_run_config_json("{}").unwrap();
        assert_eq!(config, RunConfig::default());
        assert_eq!(config.factor, QoEFactor::VQ);
        assert_eq!(config.grid.len(), 144);
        assert_eq!(config.ablations.len(), 13);
    }

    #[test]
    fn defaults_round_trip_through_json() {
        let config = RunConfig::default();
        let text = serde_json::to_string_pretty(&config).unwrap();
        assert_eq!(parse_run_config_json(&text).unwrap(), config);
    }

    #[test]
    fn partial_overrides_leave_the_rest_alone() {
        let text = r#"{
            "factor": "IL",
            "recordings": 6,
            "model": {"architecture": "transformer"},
            "train": {"epochs": 5}
        }"#;
        let config = parse_run_config_json(text).unwrap();
        assert_eq!(config.factor, QoEFactor::IL);
        assert_eq!(config.recordings, 6);
        assert_eq!(config.model.architecture, Architecture::Transformer);
        assert_eq!(config.model.units1, ModelConfig::default().units1);
        assert_eq!(config.train.epochs, 5);
        assert_eq!(config.train.batch_size, 32);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            parse_run_config_json(r#"{"epocs": 5}"#),
            Err(ConfigError::Invalid { .. })
        ));
    }

    #[test]
    fn nested_validation_failures_surface() {
        assert!(parse_run_config_json(r#"{"recordings": 0}"#).is_err());
        assert!(parse_run_config_json(r#"{"train": {"batch_size": 1}}"#).is_err());
        assert!(parse_run_config_json(r#"{"model": {"classes": 2}}"#).is_err());
        assert!(parse_run_config_json(r#"{"synth": {"carrier_hz": 200.0}}"#).is_err());
        assert!(parse_run_config_json(
            r#"{"ablations": [{"kind": "band", "index": 9}]}"#
        )
        .is_err());
    }
}
