//! The JSON experiment description every command starts from.

use std::path::{Path, PathBuf};

use jepa_score_core::eval::CellConfig;
use jepa_score_core::jepa::{JepaLossConfig, Optimizer, TrainConfig};
use jepa_score_core::synthdata::{GeneratorSpec, RandomMixture, SynthDataset, TransformSpec};
use jepa_score_core::{derive_seed, EncoderSpec, ScoreConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Context, Result};

const WORLD_TAG: u64 = 1;
const DATA_TAG: u64 = 2;
const TRAIN_TAG: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Generators {
    Explicit(GeneratorSpec),
    /// A fresh mixture drawn from the run seed.
    Random(RandomWorld),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomWorld {
    pub dim: usize,
    #[serde(default = "default_components")]
    pub n_components: usize,
    #[serde(default = "default_mean_range")]
    pub mean_range: (f64, f64),
    #[serde(default = "default_std_range")]
    pub std_range: (f64, f64),
}

fn default_components() -> usize {
    RandomMixture::default().n_components
}

fn default_mean_range() -> (f64, f64) {
    RandomMixture::default().mean_range
}

fn default_std_range() -> (f64, f64) {
    RandomMixture::default().std_range
}

impl RandomWorld {
    pub fn recipe(&self) -> RandomMixture {
        RandomMixture {
            n_components: self.n_components,
            mean_range: self.mean_range,
            std_range: self.std_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub generators: Generators,
    #[serde(default)]
    pub transform: TransformSpec,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default = "two")]
    pub views_per_sample: usize,
    #[serde(default)]
    pub loss: JepaLossConfig,
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub encoder: EncoderSpec,
    pub train: TrainSection,
    #[serde(default)]
    pub score: ScoreConfig,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| CliError::ConfigParse {
            path: path.to_owned(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate().context("encoder")?;
        self.world.transform.validate().context("world.transform")?;
        self.train_config().validate().context("train")?;
        self.train.loss.validate().context("train.loss")?;
        self.score.validate().context("score")?;
        if self.world.n_samples == 0 {
            return Err(CliError::Usage("world.n_samples: must be at least 1".into()));
        }
        if self.world_dim() != self.encoder.input_dim {
            return Err(CliError::Usage(format!(
                "encoder.input_dim: {} does not match the world dimension {}",
                self.encoder.input_dim,
                self.world_dim()
            )));
        }
        if let Generators::Explicit(spec) = &self.world.generators {
            spec.validate().context("world.generators")?;
        }
        Ok(())
    }

    pub fn world_dim(&self) -> usize {
        match &self.world.generators {
            Generators::Explicit(spec) => spec.dim(),
            Generators::Random(w) => w.dim,
        }
    }

    pub fn generator_spec(&self) -> Result<GeneratorSpec> {
        match &self.world.generators {
            Generators::Explicit(spec) => Ok(spec.clone()),
            Generators::Random(w) => w
                .recipe()
                .build(w.dim, derive_seed(self.seed, WORLD_TAG))
                .context("world"),
        }
    }

    pub fn dataset(&self) -> Result<SynthDataset> {
        SynthDataset::generate(
            self.generator_spec()?,
            self.world.transform,
            self.world.n_samples,
            derive_seed(self.seed, DATA_TAG),
        )
        .context("dataset")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.train.batch_size,
            steps: self.train.steps,
            learning_rate: self.train.learning_rate,
            optimizer: self.train.optimizer,
            seed: derive_seed(self.seed, TRAIN_TAG),
            views_per_sample: self.train.views_per_sample,
        }
    }

    /// Settings for correlation cells. The input dimension comes from each cell.
    pub fn cell_config(&self) -> Result<CellConfig> {
        let world = match &self.world.generators {
            Generators::Random(w) => w.recipe(),
            Generators::Explicit(_) => {
                return Err(CliError::Usage(
                    "world.generators: correlation grids need a random world".into(),
                ))
            }
        };
        Ok(CellConfig {
            world,
            transform: self.world.transform,
            hidden_widths: self.encoder.hidden_widths.clone(),
            embed_dim: self.encoder.embed_dim,
            activation: self.encoder.activation,
            train: self.train_config(),
            loss: self.train.loss.clone(),
            score: self.score,
            ..CellConfig::default()
        })
    }
}
