use std::path::Path;

use jepa_score_core::{EncoderParams, EncoderSpec, Layer};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Context, Result};
use crate::io::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub train_steps: usize,
    pub final_loss: Option<f64>,
}

/// A trained encoder as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub spec: EncoderSpec,
    pub layers: Vec<Layer>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn new(params: &EncoderParams, meta: CheckpointMeta) -> Self {
        Self {
            spec: params.spec().clone(),
            layers: params.layers().to_vec(),
            meta,
        }
    }

    pub fn params(&self) -> Result<EncoderParams> {
        EncoderParams::from_layers(self.spec.clone(), self.layers.clone()).context("checkpoint layers")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::format(path, e.to_string()))?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}
