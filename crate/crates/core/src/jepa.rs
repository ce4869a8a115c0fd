//! Joint-embedding objective and training loop.
//!
//! The loss has an invariance part (mean squared distance between the
//! embeddings of two noisy views, predictor fixed to the identity) and an
//! anti-collapse part that pulls the pooled view embeddings toward the first
//! two moments of `N(0, I/K)`. An optional sliced Gaussianity term matches
//! the empirical characteristic function of random 1-D projections to the
//! standard normal one; it is off unless `lambda_gauss > 0`.

use alloc::vec;
use alloc::vec::Vec;

use libm::{cos, exp, sin, sqrt};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderParams, EncoderSpec, Gradients};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::synthdata::{apply_transform, SynthDataset, TransformSpec};

fn default_one() -> f64 {
    1.0
}

fn default_directions() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JepaLossConfig {
    pub lambda_inv: f64,
    pub lambda_var: f64,
    pub lambda_cov: f64,
    /// Weight of the `‖batch mean‖²` centering penalty.
    #[serde(default = "default_one")]
    pub lambda_mean: f64,
    /// Per-coordinate std target; `None` means `1/√K`.
    #[serde(default)]
    pub target_scale: Option<f64>,
    #[serde(default)]
    pub lambda_gauss: f64,
    #[serde(default = "default_directions")]
    pub gauss_directions: usize,
}

impl Default for JepaLossConfig {
    fn default() -> Self {
        Self {
            lambda_inv: 1.0,
            lambda_var: 25.0,
            lambda_cov: 25.0,
            lambda_mean: 1.0,
            target_scale: None,
            lambda_gauss: 0.0,
            gauss_directions: default_directions(),
        }
    }
}

impl JepaLossConfig {
    pub fn target_std(&self, k: usize) -> f64 {
        self.target_scale.unwrap_or(1.0 / sqrt(k as f64))
    }

    fn check_weights(&self) -> Result<()> {
        let weights = [
            ("lambda_inv", self.lambda_inv),
            ("lambda_var", self.lambda_var),
            ("lambda_cov", self.lambda_cov),
            ("lambda_mean", self.lambda_mean),
            ("lambda_gauss", self.lambda_gauss),
        ];
        for (field, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::config(field, "must be finite and non-negative"));
            }
        }
        if let Some(t) = self.target_scale {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("target_scale", "must be positive"));
            }
        }
        if self.lambda_gauss > 0.0 && self.gauss_directions == 0 {
            return Err(Error::config("gauss_directions", "must be at least 1"));
        }
        Ok(())
    }

    /// Full check used before training: some anti-collapse weight must be active.
    pub fn validate(&self) -> Result<()> {
        self.check_weights()?;
        if self.lambda_var <= 0.0 && self.lambda_cov <= 0.0 {
            return Err(Error::config("lambda_var", "lambda_var or lambda_cov must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn default_views() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
    pub seed: u64,
    #[serde(default = "default_views")]
    pub views_per_sample: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            steps: 20_000,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            seed: 0,
            views_per_sample: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if self.views_per_sample != 2 {
            return Err(Error::config("views_per_sample", "only two views are supported"));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(Error::config("optimizer", "need 0 <= beta < 1 and eps > 0"));
            }
        }
        Ok(())
    }
}

/// Mean over the batch of `‖z1_i - z2_i‖²`.
pub fn invariance_term(z1: &Matrix, z2: &Matrix) -> Result<f64> {
    check_same_shape(z1, z2)?;
    let total: f64 = z1
        .as_slice()
        .iter()
        .zip(z2.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(total / z1.rows() as f64)
}

fn check_same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(Error::dims("view batch rows", a.rows(), b.rows()));
    }
    if a.cols() != b.cols() {
        return Err(Error::dims("view batch columns", a.cols(), b.cols()));
    }
    Ok(())
}

/// Moment-matching anti-collapse term on a `batch x K` embedding matrix:
/// `lambda_var Σ_j (std_j - τ)² + lambda_cov Σ_{j≠j'} C_jj'² + lambda_mean ‖mean‖²`
/// with sample (n-1) covariance `C` and `τ = 1/√K` by default.
pub fn diversity_term(z: &Matrix, cfg: &JepaLossConfig) -> Result<f64> {
    Ok(diversity_with_grad(z, cfg, false)?.0)
}

fn diversity_with_grad(z: &Matrix, cfg: &JepaLossConfig, want_grad: bool) -> Result<(f64, Option<Matrix>)> {
    let n = z.rows();
    if n < 2 {
        return Err(Error::config("batch", "diversity needs at least two embeddings"));
    }
    let k = z.cols();
    let tau = cfg.target_std(k);
    let nf = n as f64;
    let mut mean = vec![0.0; k];
    for row in z.row_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut centered = z.clone();
    for r in 0..n {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let cov = centered.transpose_matmul(&centered)?.scaled(1.0 / (nf - 1.0));

    let mut value = cfg.lambda_mean * mean.iter().map(|m| m * m).sum::<f64>();
    // dL/dC, symmetric
    let mut g = Matrix::zeros(k, k);
    for j in 0..k {
        let std = sqrt(cov[(j, j)]);
        value += cfg.lambda_var * (std - tau) * (std - tau);
        g[(j, j)] = cfg.lambda_var * (std - tau) / std.max(1e-12);
        for jj in 0..k {
            if jj != j {
                let c = cov[(j, jj)];
                value += cfg.lambda_cov * c * c;
                g[(j, jj)] = 2.0 * cfg.lambda_cov * c;
            }
        }
    }
    if !want_grad {
        return Ok((value, None));
    }
    // dL/dz_i = 2/(n-1) G (z_i - m) + 2 lambda_mean m / n
    let mut grad = centered.matmul(&g)?.scaled(2.0 / (nf - 1.0));
    for r in 0..n {
        for (v, m) in grad.row_mut(r).iter_mut().zip(&mean) {
            *v += 2.0 * cfg.lambda_mean * m / nf;
        }
    }
    Ok((value, Some(grad)))
}

const CF_POINTS: usize = 16;
const CF_MAX_T: f64 = 4.0;

/// Sliced characteristic-function distance between the projected, rescaled
/// embeddings `√K z·a` and `N(0, 1)`, averaged over the unit `directions`
/// (`K x P`) and multiplied by the batch size.
pub fn gaussianity_term(z: &Matrix, directions: &Matrix) -> Result<f64> {
    Ok(gaussianity_with_grad(z, directions, false)?.0)
}

fn gaussianity_with_grad(z: &Matrix, directions: &Matrix, want_grad: bool) -> Result<(f64, Option<Matrix>)> {
    if directions.rows() != z.cols() {
        return Err(Error::dims("projection directions", z.cols(), directions.rows()));
    }
    let n = z.rows() as f64;
    let p = directions.cols();
    let root_k = sqrt(z.cols() as f64);
    let proj = z.matmul(directions)?.scaled(root_k);
    let dt = CF_MAX_T / CF_POINTS as f64;
    let ts: Vec<f64> = (1..=CF_POINTS).map(|j| j as f64 * dt).collect();
    let target: Vec<f64> = ts.iter().map(|t| exp(-0.5 * t * t)).collect();
    let weights: Vec<f64> = target.iter().map(|g| g * dt).collect();

    let mut value = 0.0;
    let mut dproj = want_grad.then(|| Matrix::zeros(proj.rows(), p));
    for d in 0..p {
        let mut re = [0.0; CF_POINTS];
        let mut im = [0.0; CF_POINTS];
        for i in 0..proj.rows() {
            let y = proj[(i, d)];
            for (j, t) in ts.iter().enumerate() {
                re[j] += cos(t * y);
                im[j] += sin(t * y);
            }
        }
        re.iter_mut().chain(im.iter_mut()).for_each(|v| *v /= n);
        for j in 0..CF_POINTS {
            let dr = re[j] - target[j];
            value += weights[j] * (dr * dr + im[j] * im[j]);
        }
        if let Some(dp) = dproj.as_mut() {
            for i in 0..proj.rows() {
                let y = proj[(i, d)];
                let mut g = 0.0;
                for (j, t) in ts.iter().enumerate() {
                    let dr = re[j] - target[j];
                    g += weights[j] * 2.0 * t * (im[j] * cos(t * y) - dr * sin(t * y));
                }
                // (1/n) from the means cancels the leading factor n
                dp[(i, d)] = g / p as f64;
            }
        }
    }
    let value = value * n / p as f64;
    let grad = match dproj {
        Some(dp) => Some(dp.matmul_transpose(directions)?.scaled(root_k)),
        None => None,
    };
    Ok((value, grad))
}

/// `P` random unit directions in `R^K`, one per column.
pub fn random_directions(k: usize, p: usize, rng: &mut crate::Rng) -> Matrix {
    let mut m = Matrix::from_fn(k, p, |_, _| rng.sample(StandardNormal));
    for c in 0..p {
        let norm = sqrt((0..k).map(|r| m[(r, c)] * m[(r, c)]).sum());
        for r in 0..k {
            m[(r, c)] /= norm;
        }
    }
    m
}

/// One evaluation of the objective with its exact parameter gradient.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: f64,
    pub invariance: f64,
    /// Anti-collapse part, including the Gaussianity term when enabled.
    pub diversity: f64,
    pub grads: Gradients,
}

/// Draws two views of each row of `xs`, embeds both, and returns
/// `lambda_inv · invariance + diversity(pooled views)` with its gradient.
///
/// View noise is drawn first (all first views, then all second views), then
/// projection directions if the Gaussianity term is on.
pub fn jepa_loss(
    xs: &Matrix,
    params: &EncoderParams,
    transform: &TransformSpec,
    cfg: &JepaLossConfig,
    rng: &mut crate::Rng,
) -> Result<LossEval> {
    cfg.check_weights()?;
    transform.validate()?;
    let b = xs.rows();
    let d = xs.cols();
    let mut pooled = Vec::with_capacity(2 * b * d);
    for _view in 0..2 {
        for row in xs.row_iter() {
            pooled.extend(apply_transform(row, transform, rng));
        }
    }
    let pooled = Matrix::new(2 * b, d, pooled)?;
    let trace = params.forward_trace(&pooled)?;
    let z = trace.output();
    let k = z.cols();

    let mut upstream = Matrix::zeros(2 * b, k);
    let mut invariance = 0.0;
    for i in 0..b {
        for j in 0..k {
            let diff = z[(i, j)] - z[(b + i, j)];
            invariance += diff * diff;
            let g = cfg.lambda_inv * 2.0 * diff / b as f64;
            upstream[(i, j)] = g;
            upstream[(b + i, j)] = -g;
        }
    }
    invariance /= b as f64;

    let (mut diversity, dgrad) = diversity_with_grad(z, cfg, true)?;
    add_into(&mut upstream, &dgrad.expect("gradient requested"));
    if cfg.lambda_gauss > 0.0 {
        let dirs = random_directions(k, cfg.gauss_directions, rng);
        let (g, ggrad) = gaussianity_with_grad(z, &dirs, true)?;
        diversity += cfg.lambda_gauss * g;
        add_into(
            &mut upstream,
            &ggrad.expect("gradient requested").scaled(cfg.lambda_gauss),
        );
    }
    let grads = params.backward(&trace, &upstream)?;
    Ok(LossEval {
        loss: cfg.lambda_inv * invariance + diversity,
        invariance,
        diversity,
        grads,
    })
}

fn add_into(acc: &mut Matrix, other: &Matrix) {
    for (a, b) in acc.as_mut_slice().iter_mut().zip(other.as_slice()) {
        *a += b;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub invariance: f64,
    pub diversity: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub history: Vec<LossRecord>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<f64> {
        self.history.last().map(|r| r.loss)
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn apply_update(params: &mut EncoderParams, grads: &Gradients, cfg: &TrainConfig, adam: &mut Option<AdamState>) {
    let lr = cfg.learning_rate;
    let slots = params
        .layers_mut()
        .iter_mut()
        .flat_map(|l| l.weight.as_mut_slice().iter_mut().chain(l.bias.iter_mut()));
    match (cfg.optimizer, adam.as_mut()) {
        (Optimizer::Adam { beta1, beta2, eps }, Some(state)) => {
            state.t += 1;
            let bc1 = 1.0 - libm::pow(beta1, state.t as f64);
            let bc2 = 1.0 - libm::pow(beta2, state.t as f64);
            for (i, (p, g)) in slots.zip(grads.values()).enumerate() {
                state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
                state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
                let m_hat = state.m[i] / bc1;
                let v_hat = state.v[i] / bc2;
                *p -= lr * m_hat / (sqrt(v_hat) + eps);
            }
        }
        _ => {
            for (p, g) in slots.zip(grads.values()) {
                *p -= lr * g;
            }
        }
    }
}

/// Trains a fresh encoder on `dataset` and returns it with the per-step losses.
///
/// Parameters are initialized from `cfg.seed`; minibatches (drawn with
/// replacement) and view noise come from an independent stream of the same seed.
pub fn train(
    dataset: &SynthDataset,
    spec: &EncoderSpec,
    cfg: &TrainConfig,
    loss_cfg: &JepaLossConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    loss_cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty { context: "dataset" });
    }
    if dataset.dim() != spec.input_dim {
        return Err(Error::dims("dataset dimension", spec.input_dim, dataset.dim()));
    }
    let mut params = EncoderParams::init(spec, cfg.seed)?;
    let n_params = params.zero_gradients().values().count();
    let mut adam = matches!(cfg.optimizer, Optimizer::Adam { .. }).then(|| AdamState {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        t: 0,
    });
    let mut rng = crate::seeded_rng(cfg.seed, 1);
    let mut history = Vec::with_capacity(cfg.steps);
    let d = spec.input_dim;
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size * d);
        for _ in 0..cfg.batch_size {
            let idx = rng.random_range(0..dataset.len());
            batch.extend_from_slice(&dataset.generators[idx]);
        }
        let xs = Matrix::new(cfg.batch_size, d, batch)?;
        let eval = jepa_loss(&xs, &params, &dataset.transform, loss_cfg, &mut rng)?;
        if !eval.loss.is_finite() || eval.grads.values().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step });
        }
        history.push(LossRecord {
            step,
            loss: eval.loss,
            invariance: eval.invariance,
            diversity: eval.diversity,
        });
        apply_update(&mut params, &eval.grads, cfg, &mut adam);
    }
    Ok(TrainOutcome { params, history })
}

/// `‖Cov(z) - I/K‖_F / ‖I/K‖_F` over the rows of `z`.
pub fn moment_gap(z: &Matrix) -> Result<f64> {
    let n = z.rows();
    if n < 2 {
        return Err(Error::config("batch", "moment gap needs at least two embeddings"));
    }
    let k = z.cols();
    let mut centered = z.clone();
    let mean: Vec<f64> = (0..k)
        .map(|j| (0..n).map(|i| z[(i, j)]).sum::<f64>() / n as f64)
        .collect();
    for r in 0..n {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let cov = centered.transpose_matmul(&centered)?.scaled(1.0 / (n as f64 - 1.0));
    let target = 1.0 / k as f64;
    let mut diff = 0.0;
    for i in 0..k {
        for j in 0..k {
            let t = if i == j { target } else { 0.0 };
            diff += (cov[(i, j)] - t) * (cov[(i, j)] - t);
        }
    }
    Ok(sqrt(diff) / (target * sqrt(k as f64)))
}
