//! Files, configs and the `jepa-score` command line around
//! [`jepa_score_core`].

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod parallel;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use jepa_score_core as core;
