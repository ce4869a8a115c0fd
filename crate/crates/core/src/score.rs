//! Jacobian log-volume scores and sampling from them.
//!
//! `jepa_score(x) = Σ_k log max(σ_k(J_f(x)), eps)`. It estimates
//! `log p(x)` up to an additive constant that depends on the model, so
//! scores are only comparable within one encoder.

use alloc::vec::Vec;

use libm::{log, sqrt};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::linalg::log_singular_volume;
use crate::num::log_sum_exp;
use crate::synthdata::{apply_transform, TransformSpec};

fn default_eps() -> f64 {
    1e-6
}

fn default_mc() -> usize {
    1
}

fn default_fd() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreConfig {
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_mc")]
    pub mc_transform_samples: usize,
    #[serde(default = "default_fd")]
    pub fd_step: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            eps: default_eps(),
            mc_transform_samples: default_mc(),
            fd_step: default_fd(),
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::config("eps", "must be strictly positive"));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::config("fd_step", "must be strictly positive"));
        }
        if self.mc_transform_samples == 0 {
            return Err(Error::config("mc_transform_samples", "must be at least 1"));
        }
        Ok(())
    }
}

/// Log singular-value volume of the encoder's input Jacobian at `x`.
pub fn jepa_score<E: Encoder + ?Sized>(encoder: &E, x: &[f64], cfg: &ScoreConfig) -> Result<f64> {
    log_singular_volume(&encoder.input_jacobian(x)?, cfg.eps)
}

/// A Monte-Carlo log-density estimate with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub log_density: f64,
    /// Standard error of `log_density`; zero when the transform is the identity.
    pub std_error: f64,
    /// Sample std of `exp(-score)` divided by its mean. Standard error for
    /// `M` draws is this over `√M`.
    pub relative_spread: f64,
}

/// `-log( (1/M) Σ_m exp(-score(t_m(mu))) )` over `M = cfg.mc_transform_samples`
/// transformed copies of `mu`, computed in the log domain.
///
/// With the identity transform the expectation is over a point mass and the
/// result is `jepa_score(mu)`, bit for bit, without touching `rng`.
pub fn mc_generator_log_density<E: Encoder + ?Sized>(
    encoder: &E,
    mu: &[f64],
    t: &TransformSpec,
    cfg: &ScoreConfig,
    rng: &mut crate::Rng,
) -> Result<f64> {
    Ok(mc_generator_estimate(encoder, mu, t, cfg, rng)?.log_density)
}

pub fn mc_generator_estimate<E: Encoder + ?Sized>(
    encoder: &E,
    mu: &[f64],
    t: &TransformSpec,
    cfg: &ScoreConfig,
    rng: &mut crate::Rng,
) -> Result<McEstimate> {
    cfg.validate()?;
    t.validate()?;
    if t.is_identity() {
        return Ok(McEstimate {
            log_density: jepa_score(encoder, mu, cfg)?,
            std_error: 0.0,
            relative_spread: 0.0,
        });
    }
    let m = cfg.mc_transform_samples;
    let mut neg = Vec::with_capacity(m);
    for _ in 0..m {
        let x = apply_transform(mu, t, rng);
        neg.push(-jepa_score(encoder, &x, cfg)?);
    }
    let lse = log_sum_exp(neg.iter().copied());
    let log_density = -(lse - log(m as f64));
    let relative_spread = if m > 1 {
        let shift = neg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = neg.iter().map(|v| libm::exp(v - shift)).collect();
        let mean = crate::num::mean(&w);
        sqrt(crate::num::variance(&w)) / mean
    } else {
        0.0
    };
    Ok(McEstimate {
        log_density,
        std_error: relative_spread / sqrt(m as f64),
        relative_spread,
    })
}

/// Central finite-difference gradient of `jepa_score` with step `cfg.fd_step`.
pub fn score_gradient<E: Encoder + ?Sized>(encoder: &E, x: &[f64], cfg: &ScoreConfig) -> Result<Vec<f64>> {
    if !(cfg.fd_step > 0.0) {
        return Err(Error::config("fd_step", "must be strictly positive"));
    }
    let h = cfg.fd_step;
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = jepa_score(encoder, &probe, cfg)?;
        probe[i] = x[i] - h;
        let down = jepa_score(encoder, &probe, cfg)?;
        probe[i] = x[i];
        let g = (up - down) / (2.0 * h);
        if !g.is_finite() {
            return Err(Error::NonFiniteScore { coordinate: i });
        }
        grad.push(g);
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LangevinInit {
    FromData,
    #[default]
    FromGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinConfig {
    pub step_size: f64,
    pub n_steps: usize,
    /// Defaults to `√(2 step_size)`.
    #[serde(default)]
    pub noise_scale: Option<f64>,
    #[serde(default)]
    pub init: LangevinInit,
    pub seed: u64,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            n_steps: 5000,
            noise_scale: None,
            init: LangevinInit::FromGaussian,
            seed: 0,
        }
    }
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::config("step_size", "must be positive"));
        }
        if let Some(s) = self.noise_scale {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::config("noise_scale", "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn noise(&self) -> f64 {
        self.noise_scale.unwrap_or_else(|| sqrt(2.0 * self.step_size))
    }
}

const DIVERGENCE_NORM: f64 = 1e6;

/// Starting points for `n_chains` chains: rows of `data` (cycled) or standard normal draws.
pub fn initial_points(
    init: LangevinInit,
    n_chains: usize,
    dim: usize,
    data: Option<&[Vec<f64>]>,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    match init {
        LangevinInit::FromData => {
            let data = data.filter(|d| !d.is_empty()).ok_or(Error::Empty {
                context: "langevin initialization data",
            })?;
            if let Some(bad) = data.iter().find(|r| r.len() != dim) {
                return Err(Error::dims("langevin initialization point", dim, bad.len()));
            }
            Ok((0..n_chains).map(|i| data[i % data.len()].clone()).collect())
        }
        LangevinInit::FromGaussian => {
            let mut rng = crate::seeded_rng(seed, u64::MAX);
            Ok((0..n_chains)
                .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
                .collect())
        }
    }
}

/// Unadjusted Langevin on an arbitrary gradient field:
/// `x <- x + η grad(x) + noise · z`. Chain `c` draws from its own stream of `cfg.seed`.
pub fn langevin_with<G>(grad: G, cfg: &LangevinConfig, init_points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    init_points
        .iter()
        .enumerate()
        .map(|(chain, start)| langevin_chain(&grad, cfg, chain, start))
        .collect()
}

/// Chain number `chain` of [`langevin_with`], runnable on its own.
pub fn langevin_chain<G>(grad: G, cfg: &LangevinConfig, chain: usize, start: &[f64]) -> Result<Vec<f64>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let eta = cfg.step_size;
    let noise = cfg.noise();
    let mut rng = crate::seeded_rng(cfg.seed, chain as u64);
    let mut x = start.to_vec();
    for step in 0..cfg.n_steps {
        let g = grad(&x)?;
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi += eta * gi + noise * rng.sample::<f64, _>(StandardNormal);
        }
        let norm = sqrt(x.iter().map(|v| v * v).sum());
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::ChainDiverged { chain, step });
        }
    }
    Ok(x)
}

/// Langevin chains driven by the finite-difference gradient of `jepa_score`.
pub fn langevin_sample<E: Encoder + ?Sized>(
    encoder: &E,
    cfg: &LangevinConfig,
    score_cfg: &ScoreConfig,
    init_points: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    score_cfg.validate()?;
    if let Some(bad) = init_points.iter().find(|p| p.len() != encoder.input_dim()) {
        return Err(Error::dims(
            "langevin initialization point",
            encoder.input_dim(),
            bad.len(),
        ));
    }
    langevin_with(|x| score_gradient(encoder, x, score_cfg), cfg, init_points)
}

/// Scores of a batch, in input order, with the settings that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub scores: Vec<f64>,
    pub eps: f64,
    pub seed: Option<u64>,
}

impl ScoreReport {
    pub fn new(scores: Vec<f64>, eps: f64) -> Self {
        Self {
            scores,
            eps,
            seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

pub fn score_batch<E: Encoder + ?Sized>(encoder: &E, xs: &[Vec<f64>], cfg: &ScoreConfig) -> Result<ScoreReport> {
    cfg.validate()?;
    let scores = xs
        .iter()
        .map(|x| jepa_score(encoder, x, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreReport::new(scores, cfg.eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{Activation, EncoderParams, EncoderSpec, Layer};
    use crate::linalg::Matrix;
    use alloc::vec;

    fn linear(w: Matrix) -> EncoderParams {
        let spec = EncoderSpec {
            input_dim: w.cols(),
            hidden_widths: vec![],
            embed_dim: w.rows(),
            activation: Activation::Tanh,
        };
        let bias = vec![0.0; w.rows()];
        EncoderParams::from_layers(spec, vec![Layer { weight: w, bias }]).unwrap()
    }

    fn tanh_net(d: usize, k: usize, seed: u64) -> EncoderParams {
        EncoderParams::init(
            &EncoderSpec {
                input_dim: d,
                hidden_widths: vec![6, 5],
                embed_dim: k,
                activation: Activation::Tanh,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn scaled_identity_score() {
        let k = 5;
        let enc = linear(Matrix::identity(k).scaled(2.0));
        let s = jepa_score(&enc, &vec![0.3; k], &ScoreConfig::default()).unwrap();
        assert!((s - k as f64 * libm::log(2.0)).abs() < 1e-12);
        let enc = linear(Matrix::from_diag(&[2.0, 3.0]));
        let s = jepa_score(&enc, &[1.0, -1.0], &ScoreConfig::default()).unwrap();
        assert!((s - libm::log(6.0)).abs() < 1e-12);
    }

    #[test]
    fn identity_transform_degenerates_exactly() {
        let enc = tanh_net(3, 2, 4);
        let cfg = ScoreConfig {
            mc_transform_samples: 17,
            ..ScoreConfig::default()
        };
        let x = [0.1, 0.5, -0.4];
        let mut rng = crate::seeded_rng(0, 0);
        assert_eq!(
            mc_generator_log_density(&enc, &x, &TransformSpec::NONE, &cfg, &mut rng).unwrap(),
            jepa_score(&enc, &x, &cfg).unwrap()
        );
    }

    #[test]
    fn linear_encoder_mc_is_constant() {
        let w = Matrix::new(2, 3, vec![1.0, 0.5, 0.0, -0.3, 2.0, 1.0]).unwrap();
        let enc = linear(w);
        let cfg = ScoreConfig {
            mc_transform_samples: 32,
            ..ScoreConfig::default()
        };
        let x = [0.4, -0.1, 0.9];
        let plain = jepa_score(&enc, &x, &cfg).unwrap();
        let mut rng = crate::seeded_rng(2, 0);
        let mc = mc_generator_log_density(&enc, &x, &TransformSpec::additive(0.7), &cfg, &mut rng).unwrap();
        assert!((mc - plain).abs() < 1e-10);
    }

    #[test]
    fn linear_encoder_has_zero_score_gradient() {
        let enc = linear(Matrix::new(2, 2, vec![1.0, 2.0, -0.5, 3.0]).unwrap());
        let g = score_gradient(&enc, &[0.3, 0.2], &ScoreConfig::default()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn langevin_zero_steps_returns_init() {
        let enc = tanh_net(2, 2, 1);
        let cfg = LangevinConfig {
            n_steps: 0,
            ..LangevinConfig::default()
        };
        let init = vec![vec![0.5, 0.5], vec![-1.0, 2.0]];
        assert_eq!(
            langevin_sample(&enc, &cfg, &ScoreConfig::default(), &init).unwrap(),
            init
        );
    }

    #[test]
    fn langevin_divergence_names_chain_and_step() {
        let cfg = LangevinConfig {
            step_size: 1.0,
            n_steps: 100,
            noise_scale: Some(0.0),
            ..LangevinConfig::default()
        };
        let init = vec![vec![0.0], vec![1.0]];
        let err = langevin_with(|x| Ok(vec![10.0 * x[0] + 1.0]), &cfg, &init).unwrap_err();
        assert!(matches!(err, Error::ChainDiverged { chain: 0, .. }));
    }

    #[test]
    fn initial_points_modes() {
        let data = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let pts = initial_points(LangevinInit::FromData, 3, 2, Some(&data), 0).unwrap();
        assert_eq!(pts, vec![data[0].clone(), data[1].clone(), data[0].clone()]);
        assert!(initial_points(LangevinInit::FromData, 3, 2, None, 0).is_err());
        let g = initial_points(LangevinInit::FromGaussian, 4, 3, None, 5).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g, initial_points(LangevinInit::FromGaussian, 4, 3, None, 5).unwrap());
    }

    #[test]
    fn score_batch_singleton_and_permutation() {
        let enc = tanh_net(3, 2, 8);
        let cfg = ScoreConfig::default();
        let xs = vec![vec![0.1, 0.2, 0.3], vec![-1.0, 0.5, 2.0], vec![0.0, 0.0, 1.0]];
        let one = score_batch(&enc, &xs[..1], &cfg).unwrap();
        assert_eq!(one.scores, vec![jepa_score(&enc, &xs[0], &cfg).unwrap()]);
        let all = score_batch(&enc, &xs, &cfg).unwrap();
        let permuted = vec![xs[2].clone(), xs[0].clone(), xs[1].clone()];
        let p = score_batch(&enc, &permuted, &cfg).unwrap();
        assert_eq!(p.scores, vec![all.scores[2], all.scores[0], all.scores[1]]);
    }

    #[test]
    fn config_validation() {
        assert!(ScoreConfig {
            eps: 0.0,
            ..ScoreConfig::default()
        }
        .validate()
        .is_err());
        assert!(ScoreConfig {
            fd_step: -1.0,
            ..ScoreConfig::default()
        }
        .validate()
        .is_err());
        assert!(ScoreConfig {
            mc_transform_samples: 0,
            ..ScoreConfig::default()
        }
        .validate()
        .is_err());
        assert!(LangevinConfig {
            step_size: 0.0,
            ..LangevinConfig::default()
        }
        .validate()
        .is_err());
    }
}
