//! Rayon versions of the per-row loops. Every row or chain keeps its own
//! random stream, so results are bit-identical to the serial functions.

use jepa_score_core::eval::{cell_seed, run_correlation_cell, CellConfig, CellResult};
use jepa_score_core::score::{jepa_score, langevin_chain, mc_generator_log_density, score_gradient, LangevinConfig};
use jepa_score_core::synthdata::TransformSpec;
use jepa_score_core::{seeded_rng, Encoder, Result as CoreResult, ScoreConfig, ScoreReport};
use rayon::prelude::*;

use crate::error::{CliError, Result};

pub const THREADS_ENV: &str = "JEPA_SCORE_THREADS";

/// Pool sized by `JEPA_SCORE_THREADS`, or by the hardware when unset.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV}: expected a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

pub fn score_batch_parallel<E: Encoder + Sync + ?Sized>(
    encoder: &E,
    xs: &[Vec<f64>],
    cfg: &ScoreConfig,
) -> CoreResult<ScoreReport> {
    cfg.validate()?;
    let scores = xs
        .par_iter()
        .map(|x| jepa_score(encoder, x, cfg))
        .collect::<CoreResult<Vec<_>>>()?;
    Ok(ScoreReport::new(scores, cfg.eps))
}

/// Monte-Carlo generator log-densities; row `i` draws from stream `i` of `seed`.
pub fn mc_scores_parallel<E: Encoder + Sync + ?Sized>(
    encoder: &E,
    xs: &[Vec<f64>],
    t: &TransformSpec,
    cfg: &ScoreConfig,
    seed: u64,
) -> CoreResult<ScoreReport> {
    let scores = xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| mc_generator_log_density(encoder, x, t, cfg, &mut seeded_rng(seed, i as u64)))
        .collect::<CoreResult<Vec<_>>>()?;
    let mut report = ScoreReport::new(scores, cfg.eps);
    report.seed = Some(seed);
    Ok(report)
}

/// Same chains as `langevin_sample`, one task per chain.
pub fn langevin_parallel<E: Encoder + Sync + ?Sized>(
    encoder: &E,
    cfg: &LangevinConfig,
    score_cfg: &ScoreConfig,
    init_points: &[Vec<f64>],
) -> CoreResult<Vec<Vec<f64>>> {
    score_cfg.validate()?;
    cfg.validate()?;
    if let Some(bad) = init_points.iter().find(|p| p.len() != encoder.input_dim()) {
        return Err(jepa_score_core::Error::DimensionMismatch {
            context: "langevin initialization point",
            expected: encoder.input_dim(),
            found: bad.len(),
        });
    }
    init_points
        .par_iter()
        .enumerate()
        .map(|(chain, start)| langevin_chain(|x| score_gradient(encoder, x, score_cfg), cfg, chain, start))
        .collect()
}

/// Row-major grid over `dims x sample_counts`, cells run concurrently.
pub fn correlation_grid_parallel(
    dims: &[usize],
    sample_counts: &[usize],
    cfg: &CellConfig,
    base_seed: u64,
) -> CoreResult<Vec<CellResult>> {
    let jobs: Vec<(usize, usize)> = (0..dims.len())
        .flat_map(|r| (0..sample_counts.len()).map(move |c| (r, c)))
        .collect();
    jobs.par_iter()
        .map(|&(r, c)| {
            run_correlation_cell(dims[r], sample_counts[c], cfg, cell_seed(base_seed, r, c)).map(|o| o.result)
        })
        .collect()
}
