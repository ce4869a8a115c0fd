//! The subcommands as plain functions; `main` only parses flags.

use std::path::{Path, PathBuf};

use jepa_score_core::eval::{cell_seed, histogram, run_oracle_cell, CellResult, OracleCellResult};
use jepa_score_core::jepa::train;
use jepa_score_core::score::{initial_points, LangevinConfig, LangevinInit};
use jepa_score_core::spherecheck::{concentration_report, ConcentrationReport};
use jepa_score_core::synthdata::TransformSpec;
use jepa_score_core::{Encoder, ScoreConfig, ScoreReport};

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Context, Result};
use crate::io;
use crate::parallel;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const WORLD_FILE: &str = "world.json";
pub const GRID_FILE: &str = "grid.csv";
pub const ORACLE_FILE: &str = "oracle.csv";

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub config: PathBuf,
    pub output_dir: Option<PathBuf>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub final_loss: Option<f64>,
}

/// Loads a config, applying flag overrides before validation.
fn load_config(path: &Path, tweak: impl FnOnce(&mut ExperimentConfig)) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    tweak(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// Trains on the configured world; writes the checkpoint, the loss curve and
/// the generator spec into the output directory.
pub fn cmd_train(args: &TrainArgs) -> Result<TrainSummary> {
    let cfg = load_config(&args.config, |c| {
        if let Some(d) = &args.output_dir {
            c.output_dir = d.clone();
        }
        if let Some(s) = args.steps {
            c.train.steps = s;
        }
        if let Some(s) = args.seed {
            c.seed = s;
        }
    })?;
    let dataset = cfg.dataset()?;
    let outcome = train(&dataset, &cfg.encoder, &cfg.train_config(), &cfg.train.loss).context("training")?;
    let final_loss = outcome.final_loss();
    let ckpt = Checkpoint::new(
        &outcome.params,
        CheckpointMeta {
            seed: cfg.seed,
            train_steps: cfg.train.steps,
            final_loss,
        },
    );
    let out = &cfg.output_dir;
    let checkpoint = out.join(CHECKPOINT_FILE);
    ckpt.save(&checkpoint)?;
    io::write_loss_csv(&out.join(LOSS_FILE), &outcome.history)?;
    let world = serde_json::to_string_pretty(&dataset.spec).map_err(|e| CliError::format(WORLD_FILE, e.to_string()))?;
    io::write_atomic(&out.join(WORLD_FILE), format!("{world}\n").as_bytes())?;
    Ok(TrainSummary { checkpoint, final_loss })
}

#[derive(Debug, Clone)]
pub struct ScoreArgs {
    pub checkpoint: PathBuf,
    pub input: PathBuf,
    pub output: PathBuf,
    pub eps: Option<f64>,
    pub mc_samples: usize,
    pub sigma_t: f64,
    pub seed: u64,
    pub histogram_bins: Option<(usize, PathBuf)>,
}

impl ScoreArgs {
    pub fn new(checkpoint: impl Into<PathBuf>, input: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        Self {
            checkpoint: checkpoint.into(),
            input: input.into(),
            output: output.into(),
            eps: None,
            mc_samples: 1,
            sigma_t: 0.0,
            seed: 0,
            histogram_bins: None,
        }
    }

    pub fn score_config(&self) -> ScoreConfig {
        ScoreConfig {
            eps: self.eps.unwrap_or(ScoreConfig::default().eps),
            mc_transform_samples: self.mc_samples,
            ..ScoreConfig::default()
        }
    }
}

/// Scores every input row: plain `jepa_score`, or the Monte-Carlo generator
/// estimate when both `mc_samples > 1` and `sigma_t > 0`.
pub fn cmd_score(args: &ScoreArgs) -> Result<ScoreReport> {
    let params = Checkpoint::load(&args.checkpoint)?.params()?;
    let xs = io::read_points_csv(&args.input)?;
    if let Some((i, row)) = xs.iter().enumerate().find(|(_, r)| r.len() != params.input_dim()) {
        return Err(CliError::format(
            &args.input,
            format!("row {i}: expected {} values, found {}", params.input_dim(), row.len()),
        ));
    }
    let cfg = args.score_config();
    cfg.validate().context("score flags")?;
    if !(args.sigma_t >= 0.0 && args.sigma_t.is_finite()) {
        return Err(CliError::Usage("--sigma-t: must be finite and non-negative".into()));
    }
    let pool = parallel::thread_pool()?;
    let report = if args.mc_samples > 1 && args.sigma_t > 0.0 {
        let t = TransformSpec::additive(args.sigma_t);
        pool.install(|| parallel::mc_scores_parallel(&params, &xs, &t, &cfg, args.seed))
    } else {
        pool.install(|| parallel::score_batch_parallel(&params, &xs, &cfg))
    }
    .context("scoring")?;
    io::write_scores_csv(&args.output, &report.scores)?;
    if let Some((bins, path)) = &args.histogram_bins {
        if !report.is_empty() {
            io::write_histogram_csv(path, &histogram(&report, *bins).context("histogram")?)?;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Default)]
pub struct CorrelateArgs {
    pub config: PathBuf,
    pub dims: Option<Vec<usize>>,
    pub sample_counts: Option<Vec<usize>>,
    pub output_dir: Option<PathBuf>,
    pub oracle: bool,
}

#[derive(Debug, Clone)]
pub struct CorrelateSummary {
    pub cells: Vec<CellResult>,
    pub oracle: Vec<OracleCellResult>,
    pub grid: PathBuf,
}

/// Trains and scores one cell per `(dim, n_samples)` pair. Cell `(row, col)`
/// uses seed `seed + 1000 row + col`; oracle cells reuse the first column's seed.
pub fn cmd_correlate(args: &CorrelateArgs) -> Result<CorrelateSummary> {
    let cfg = load_config(&args.config, |c| {
        if let Some(d) = &args.output_dir {
            c.output_dir = d.clone();
        }
    })?;
    let dims = args.dims.clone().unwrap_or_else(|| vec![cfg.world_dim()]);
    let counts = args.sample_counts.clone().unwrap_or_else(|| vec![cfg.world.n_samples]);
    if dims.is_empty() || counts.is_empty() {
        return Err(CliError::Usage("--dims and --sample-counts must be non-empty".into()));
    }
    if dims.contains(&0) || counts.contains(&0) {
        return Err(CliError::Usage("--dims and --sample-counts must be positive".into()));
    }
    let cell_cfg = cfg.cell_config()?;
    let pool = parallel::thread_pool()?;
    let cells = pool
        .install(|| parallel::correlation_grid_parallel(&dims, &counts, &cell_cfg, cfg.seed))
        .context("correlation grid")?;
    let grid = cfg.output_dir.join(GRID_FILE);
    io::write_grid_csv(&grid, &cells)?;
    let mut oracle = Vec::new();
    if args.oracle {
        for (row, &d) in dims.iter().enumerate() {
            oracle.push(run_oracle_cell(d, &cell_cfg, cell_seed(cfg.seed, row, 0)).context("oracle cell")?);
        }
        io::write_oracle_csv(&cfg.output_dir.join(ORACLE_FILE), &oracle)?;
    }
    Ok(CorrelateSummary { cells, oracle, grid })
}

#[derive(Debug, Clone)]
pub struct SampleArgs {
    pub checkpoint: PathBuf,
    pub output: PathBuf,
    pub chains: usize,
    pub steps: usize,
    pub eta: f64,
    pub seed: u64,
    pub init: LangevinInit,
    pub data: Option<PathBuf>,
    pub eps: Option<f64>,
}

impl SampleArgs {
    pub fn new(checkpoint: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        let d = LangevinConfig::default();
        Self {
            checkpoint: checkpoint.into(),
            output: output.into(),
            chains: 512,
            steps: d.n_steps,
            eta: d.step_size,
            seed: 0,
            init: LangevinInit::FromGaussian,
            data: None,
            eps: None,
        }
    }

    pub fn langevin_config(&self) -> LangevinConfig {
        LangevinConfig {
            step_size: self.eta,
            n_steps: self.steps,
            noise_scale: None,
            init: self.init,
            seed: self.seed,
        }
    }
}

/// Runs Langevin chains on the checkpoint's score and writes final positions.
pub fn cmd_sample(args: &SampleArgs) -> Result<Vec<Vec<f64>>> {
    let params = Checkpoint::load(&args.checkpoint)?.params()?;
    if args.chains == 0 {
        return Err(CliError::Usage("--chains: must be at least 1".into()));
    }
    let data = match (&args.init, &args.data) {
        (LangevinInit::FromData, Some(p)) => Some(io::read_points_csv(p)?),
        (LangevinInit::FromData, None) => return Err(CliError::Usage("--init data needs --data".into())),
        _ => None,
    };
    let lcfg = args.langevin_config();
    let init = initial_points(lcfg.init, args.chains, params.input_dim(), data.as_deref(), lcfg.seed)
        .context("initial points")?;
    let score_cfg = ScoreConfig {
        eps: args.eps.unwrap_or(ScoreConfig::default().eps),
        ..ScoreConfig::default()
    };
    let pool = parallel::thread_pool()?;
    let points = pool
        .install(|| parallel::langevin_parallel(&params, &lcfg, &score_cfg, &init))
        .context("langevin")?;
    io::write_points_csv(&args.output, &points)?;
    Ok(points)
}

pub fn cmd_check_sphere(dim: usize, n: usize, seed: u64) -> Result<ConcentrationReport> {
    concentration_report(dim, n, seed).context("check-sphere")
}
