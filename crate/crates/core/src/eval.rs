//! Checks of scores against known densities: correlation cells, ranking,
//! histograms and in/out-of-support separation.

use alloc::vec;
use alloc::vec::Vec;

use libm::{log, sqrt};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::encoder::{Activation, Encoder, EncoderSpec};
use crate::error::{Error, Result};
use crate::jepa::{moment_gap, train, JepaLossConfig, Optimizer, TrainConfig};
use crate::linalg::Matrix;
use crate::num::{normal_cdf, normal_pdf, LN_2PI};
use crate::score::{score_batch, ScoreConfig, ScoreReport};
use crate::spherecheck::embedding_gaussianity_report;
use crate::synthdata::{Covariance, GeneratorSpec, RandomMixture, SynthDataset, TransformSpec};
use crate::EncoderParams;

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims("pearson inputs", a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::config("pearson", "need at least two pairs"));
    }
    let ma = crate::num::mean(a);
    let mb = crate::num::mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((sab / (sqrt(saa) * sqrt(sbb))).clamp(-1.0, 1.0))
}

/// Everything a correlation cell needs besides its dimension, sample count and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    #[serde(default)]
    pub world: RandomMixture,
    pub transform: TransformSpec,
    pub hidden_widths: Vec<usize>,
    pub embed_dim: usize,
    #[serde(default)]
    pub activation: Activation,
    pub train: TrainConfig,
    pub loss: JepaLossConfig,
    #[serde(default)]
    pub score: ScoreConfig,
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
    #[serde(default = "default_gap_points")]
    pub gap_points: usize,
}

fn default_eval_points() -> usize {
    2048
}

fn default_gap_points() -> usize {
    4096
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            world: RandomMixture::default(),
            transform: TransformSpec::additive(0.05),
            hidden_widths: vec![128, 128],
            embed_dim: 16,
            activation: Activation::Tanh,
            train: TrainConfig {
                batch_size: 512,
                steps: 3000,
                learning_rate: 1e-3,
                optimizer: Optimizer::default(),
                seed: 0,
                views_per_sample: 2,
            },
            loss: JepaLossConfig {
                lambda_cov: 400.0,
                ..JepaLossConfig::default()
            },
            score: ScoreConfig::default(),
            eval_points: default_eval_points(),
            gap_points: default_gap_points(),
        }
    }
}

const WORLD_TAG: u64 = 1;
const DATA_TAG: u64 = 2;
const TRAIN_TAG: u64 = 3;
const EVAL_TAG: u64 = 4;
const GAP_TAG: u64 = 5;

/// Seed of grid cell `(row, col)`.
pub fn cell_seed(base_seed: u64, row: usize, col: usize) -> u64 {
    base_seed + row as u64 * 1000 + col as u64
}

/// The random mixture a cell with this `seed` lives in.
pub fn cell_world(dim: usize, cfg: &CellConfig, seed: u64) -> Result<GeneratorSpec> {
    cfg.world.build(dim, crate::derive_seed(seed, WORLD_TAG))
}

/// Held-out generator samples the cell scores.
pub fn cell_eval_points(world: &GeneratorSpec, cfg: &CellConfig, seed: u64) -> Result<Vec<Vec<f64>>> {
    crate::synthdata::sample_generators(world, cfg.eval_points, crate::derive_seed(seed, EVAL_TAG))
}

/// One row of the correlation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub dim: usize,
    pub n_samples: usize,
    pub pearson: f64,
    pub final_loss: f64,
    pub moment_gap: f64,
    pub mean_norm: f64,
    pub seed: u64,
}

/// A finished cell with the artifacts behind its numbers.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub result: CellResult,
    pub params: EncoderParams,
    pub world: GeneratorSpec,
    pub eval_points: Vec<Vec<f64>>,
    pub report: ScoreReport,
    pub true_log_density: Vec<f64>,
}

/// Trains an encoder on `n_samples` generators of a fresh `dim`-dimensional
/// mixture, scores held-out generators, and correlates the scores with the
/// exact generator log-density.
pub fn run_correlation_cell(dim: usize, n_samples: usize, cfg: &CellConfig, seed: u64) -> Result<CellOutcome> {
    let world = cell_world(dim, cfg, seed)?;
    let dataset = SynthDataset::generate(
        world.clone(),
        cfg.transform,
        n_samples,
        crate::derive_seed(seed, DATA_TAG),
    )?;
    let spec = EncoderSpec {
        input_dim: dim,
        hidden_widths: cfg.hidden_widths.clone(),
        embed_dim: cfg.embed_dim,
        activation: cfg.activation,
    };
    let train_cfg = TrainConfig {
        seed: crate::derive_seed(seed, TRAIN_TAG),
        ..cfg.train.clone()
    };
    let outcome = train(&dataset, &spec, &train_cfg, &cfg.loss)?;
    let params = outcome.params;
    let final_loss = outcome.history.last().map_or(f64::NAN, |r| r.loss);

    let eval_points = cell_eval_points(&world, cfg, seed)?;
    let report = score_batch(&params, &eval_points, &cfg.score)?;
    let mixture = world.prepare()?;
    let true_log_density = eval_points
        .iter()
        .map(|x| mixture.log_density(x))
        .collect::<Result<Vec<_>>>()?;
    let r = pearson(&report.scores, &true_log_density)?;

    let gap_inputs =
        crate::synthdata::sample_generators(&world, cfg.gap_points.max(2), crate::derive_seed(seed, GAP_TAG))?;
    let embeddings = params.forward_batch(&Matrix::from_rows(&gap_inputs)?)?;
    let gap = moment_gap(&embeddings)?;
    let mean_norm = embedding_gaussianity_report(&params, &gap_inputs)?.mean_norm;

    Ok(CellOutcome {
        result: CellResult {
            dim,
            n_samples,
            pearson: r,
            final_loss,
            moment_gap: gap,
            mean_norm,
            seed,
        },
        params,
        world,
        eval_points,
        report,
        true_log_density,
    })
}

/// Grid of cells over `dims x sample_counts`, rows by dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationGridResult {
    pub dims: Vec<usize>,
    pub sample_counts: Vec<usize>,
    /// Row-major, `dims.len() x sample_counts.len()`.
    pub cells: Vec<CellResult>,
}

impl CorrelationGridResult {
    pub fn cell(&self, row: usize, col: usize) -> &CellResult {
        &self.cells[row * self.sample_counts.len() + col]
    }
}

/// Runs every cell serially with seeds from [`cell_seed`].
pub fn correlation_grid(
    dims: &[usize],
    sample_counts: &[usize],
    cfg: &CellConfig,
    base_seed: u64,
) -> Result<CorrelationGridResult> {
    if dims.is_empty() || sample_counts.is_empty() {
        return Err(Error::Empty {
            context: "correlation grid",
        });
    }
    let mut cells = Vec::with_capacity(dims.len() * sample_counts.len());
    for (row, &d) in dims.iter().enumerate() {
        for (col, &n) in sample_counts.iter().enumerate() {
            cells.push(run_correlation_cell(d, n, cfg, cell_seed(base_seed, row, col))?.result);
        }
    }
    Ok(CorrelationGridResult {
        dims: dims.to_vec(),
        sample_counts: sample_counts.to_vec(),
        cells,
    })
}

/// `f(x) = (F(x), x_2, ..., x_D)` where `F` integrates an isotropic mixture
/// density along the first axis: `F(x) = ∫_{-∞}^{x_1} p(t, x_2, ..., x_D) dt`.
///
/// Its Jacobian is the identity with the first row replaced by `∇F`, so
/// `|det J_f(x)| = ∂F/∂x_1 = p(x)` exactly. Scoring it (with an `eps` below
/// the smallest density involved) reproduces the true log-density.
#[derive(Debug, Clone)]
pub struct DensityIntegralMap {
    dim: usize,
    log_weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    stds: Vec<f64>,
}

impl DensityIntegralMap {
    /// Needs isotropic components.
    pub fn new(spec: &GeneratorSpec) -> Result<Self> {
        spec.validate()?;
        let mut stds = Vec::with_capacity(spec.components.len());
        for c in &spec.components {
            match c.covariance {
                Covariance::Isotropic(s) => stds.push(s),
                Covariance::Full(_) => {
                    return Err(Error::config(
                        "covariance",
                        "density integral map needs isotropic components",
                    ))
                }
            }
        }
        Ok(Self {
            dim: spec.dim(),
            log_weights: spec.components.iter().map(|c| log(c.weight)).collect(),
            means: spec.components.iter().map(|c| c.mean.clone()).collect(),
            stds,
        })
    }

    /// Per component: `w_c N_{D-1}(x_2..; mu_c, s_c² I)` and the standardized first coordinate.
    fn tail_terms(&self, x: &[f64]) -> Result<Vec<(f64, f64)>> {
        if x.len() != self.dim {
            return Err(Error::dims("density map input", self.dim, x.len()));
        }
        let rest = (self.dim - 1) as f64;
        Ok(self
            .means
            .iter()
            .zip(&self.stds)
            .zip(&self.log_weights)
            .map(|((mu, &s), &lw)| {
                let quad: f64 = x[1..].iter().zip(&mu[1..]).map(|(a, m)| (a - m) * (a - m)).sum();
                let log_tail = lw - 0.5 * rest * (LN_2PI + 2.0 * log(s)) - 0.5 * quad / (s * s);
                (libm::exp(log_tail), (x[0] - mu[0]) / s)
            })
            .collect())
    }
}

impl Encoder for DensityIntegralMap {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        self.dim
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let terms = self.tail_terms(x)?;
        let mut out = x.to_vec();
        out[0] = terms.iter().map(|(a, u)| a * normal_cdf(*u)).sum();
        Ok(out)
    }

    fn input_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let terms = self.tail_terms(x)?;
        let mut jac = Matrix::identity(self.dim);
        jac[(0, 0)] = terms
            .iter()
            .zip(&self.stds)
            .map(|((a, u), s)| a * normal_pdf(*u) / s)
            .sum();
        for j in 1..self.dim {
            jac[(0, j)] = terms
                .iter()
                .zip(&self.means)
                .zip(&self.stds)
                .map(|(((a, u), mu), s)| -a * normal_cdf(*u) * (x[j] - mu[j]) / (s * s))
                .sum();
        }
        Ok(jac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCellResult {
    pub dim: usize,
    pub pearson: f64,
    pub seed: u64,
}

/// The cell's world and evaluation set scored through [`DensityIntegralMap`]
/// instead of a trained encoder. No clipping: `eps` is the smallest normal `f64`.
pub fn run_oracle_cell(dim: usize, cfg: &CellConfig, seed: u64) -> Result<OracleCellResult> {
    let world = cell_world(dim, cfg, seed)?;
    let points = cell_eval_points(&world, cfg, seed)?;
    let map = DensityIntegralMap::new(&world)?;
    let score_cfg = ScoreConfig {
        eps: f64::MIN_POSITIVE,
        ..cfg.score
    };
    let report = score_batch(&map, &points, &score_cfg)?;
    let mixture = world.prepare()?;
    let truth = points
        .iter()
        .map(|x| mixture.log_density(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleCellResult {
        dim,
        pearson: pearson(&report.scores, &truth)?,
        seed,
    })
}

/// Indices of the `k` lowest and `k` highest scores. Lowest come in ascending
/// score order, highest in descending order; ties go to the smaller index.
pub fn rank_by_score(report: &ScoreReport, k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if k > report.len() {
        return Err(Error::dims("rank_by_score k", report.len(), k));
    }
    let s = &report.scores;
    let mut asc: Vec<usize> = (0..s.len()).collect();
    asc.sort_by(|&a, &b| s[a].total_cmp(&s[b]).then(a.cmp(&b)));
    let mut desc: Vec<usize> = (0..s.len()).collect();
    desc.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    asc.truncate(k);
    desc.truncate(k);
    Ok((asc, desc))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `n_bins + 1` increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bins over `[min, max]`; the last bin is closed. A report with a
/// single distinct value gets a unit-wide range centered on it.
pub fn histogram(report: &ScoreReport, n_bins: usize) -> Result<Histogram> {
    if report.is_empty() {
        return Err(Error::Empty { context: "histogram" });
    }
    if n_bins == 0 {
        return Err(Error::config("n_bins", "must be at least 1"));
    }
    if report.scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "histogram" });
    }
    let mut lo = report.scores.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = report.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / n_bins as f64;
    let mut edges: Vec<f64> = (0..=n_bins).map(|i| lo + width * i as f64).collect();
    edges[n_bins] = hi;
    let mut counts = vec![0usize; n_bins];
    for &v in &report.scores {
        let idx = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationReport {
    /// `median(in) - median(out)`.
    pub median_gap: f64,
    pub in_dist_p5: f64,
    /// Fraction of out-of-distribution scores strictly below `in_dist_p5`.
    pub ood_below_p5: f64,
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn separation_report(in_dist: &ScoreReport, out_dist: &ScoreReport) -> Result<SeparationReport> {
    if in_dist.is_empty() || out_dist.is_empty() {
        return Err(Error::Empty {
            context: "separation report",
        });
    }
    let p5 = quantile(&in_dist.scores, 0.05);
    let below = out_dist.scores.iter().filter(|&&s| s < p5).count();
    Ok(SeparationReport {
        median_gap: quantile(&in_dist.scores, 0.5) - quantile(&out_dist.scores, 0.5),
        in_dist_p5: p5,
        ood_below_p5: below as f64 / out_dist.len() as f64,
    })
}

/// Points far outside an isotropic mixture: for every component `c`,
/// `‖x - mu_c‖ / √D ≥ min_sigmas · s_c`, i.e. at least `min_sigmas` standard
/// deviations per coordinate (root-mean-square) away from every mean.
pub fn out_of_support_points(spec: &GeneratorSpec, n: usize, min_sigmas: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let d = spec.dim();
    let stds = spec
        .components
        .iter()
        .map(|c| match c.covariance {
            Covariance::Isotropic(s) => Ok(s),
            Covariance::Full(_) => Err(Error::config(
                "covariance",
                "out-of-support points need isotropic components",
            )),
        })
        .collect::<Result<Vec<_>>>()?;
    let root_d = sqrt(d as f64);
    let far_enough = |x: &[f64]| {
        spec.components.iter().zip(&stds).all(|(c, s)| {
            let dist = sqrt(x.iter().zip(&c.mean).map(|(a, m)| (a - m) * (a - m)).sum());
            dist / root_d >= min_sigmas * s
        })
    };
    let mut rng = crate::seeded_rng(seed, 0);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..spec.components.len());
        let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = sqrt(u.iter().map(|v| v * v).sum());
        u.iter_mut().for_each(|v| *v /= norm);
        let mut radius = min_sigmas * stds[c] * root_d;
        loop {
            let x: Vec<f64> = spec.components[c]
                .mean
                .iter()
                .zip(&u)
                .map(|(m, v)| m + radius * v)
                .collect();
            if far_enough(&x) {
                out.push(x);
                break;
            }
            radius *= 1.1;
        }
    }
    Ok(out)
}

/// Exact generator log-density at each point.
pub fn true_log_densities(spec: &GeneratorSpec, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mixture = spec.prepare()?;
    xs.iter().map(|x| mixture.log_density(x)).collect()
}
