//! Gaussian-mixture generator worlds with exact log-densities.
//!
//! Clean samples ("generators") come from a mixture `p_mu`. Views are made by
//! a stochastic transform `p_T`, here additive isotropic Gaussian noise, so
//! the density of transformed samples is the mixture convolved with the
//! noise and stays closed-form.

use alloc::vec::Vec;

use libm::{log, sqrt};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, forward_substitute, Matrix};
use crate::num::{log_sum_exp, LN_2PI};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    /// Per-coordinate standard deviation `s`; covariance `s² I`.
    Isotropic(f64),
    /// Full symmetric positive-definite covariance.
    Full(Matrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Covariance,
}

/// The generator density `p_mu`: a finite Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub components: Vec<Component>,
}

/// Recipe for a random mixture; the defaults spread five isotropic
/// components of different widths over `[-3, 3]^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomMixture {
    pub n_components: usize,
    pub mean_range: (f64, f64),
    pub std_range: (f64, f64),
}

impl Default for RandomMixture {
    fn default() -> Self {
        Self {
            n_components: 5,
            mean_range: (-3.0, 3.0),
            std_range: (0.5, 1.5),
        }
    }
}

impl RandomMixture {
    /// Equal-weight mixture in `dim` dimensions, deterministic given `seed`.
    pub fn build(&self, dim: usize, seed: u64) -> Result<GeneratorSpec> {
        if self.n_components == 0 {
            return Err(Error::config("n_components", "must be at least 1"));
        }
        if dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        let (lo, hi) = self.mean_range;
        let (slo, shi) = self.std_range;
        if !(lo <= hi) || !(slo > 0.0 && slo <= shi) {
            return Err(Error::config(
                "std_range",
                "need 0 < low <= high and ordered mean_range",
            ));
        }
        let mut rng = crate::seeded_rng(seed, 0);
        let weight = 1.0 / self.n_components as f64;
        let components = (0..self.n_components)
            .map(|_| {
                let mean = (0..dim).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
                let std = slo + (shi - slo) * rng.random::<f64>();
                Component {
                    weight,
                    mean,
                    covariance: Covariance::Isotropic(std),
                }
            })
            .collect();
        let spec = GeneratorSpec { components };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Isotropic(f64),
    Full(Matrix),
}

#[derive(Debug, Clone)]
struct Prepared {
    log_weight: f64,
    mean: Vec<f64>,
    factor: Factor,
    /// `-½ log|Σ| - D/2 log 2π`
    log_norm: f64,
}

/// A validated mixture with its Cholesky factors computed once.
#[derive(Debug, Clone)]
pub struct Mixture {
    dim: usize,
    weights: Vec<f64>,
    comps: Vec<Prepared>,
}

impl GeneratorSpec {
    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    pub fn validate(&self) -> Result<()> {
        self.prepare().map(|_| ())
    }

    pub fn prepare(&self) -> Result<Mixture> {
        self.prepare_with_noise(0.0)
    }

    /// The mixture convolved with `N(0, sigma² I)`: every covariance gains `sigma² I`.
    pub fn prepare_with_noise(&self, sigma: f64) -> Result<Mixture> {
        if self.components.is_empty() {
            return Err(Error::Empty {
                context: "mixture components",
            });
        }
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::config("mean", "component means must be non-empty"));
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if self.components.iter().any(|c| !(c.weight > 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::config("weight", "weights must be positive and sum to 1"));
        }
        let var_add = sigma * sigma;
        let mut comps = Vec::with_capacity(self.components.len());
        for (i, c) in self.components.iter().enumerate() {
            if c.mean.len() != dim {
                return Err(Error::dims("component mean", dim, c.mean.len()));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::NonFinite {
                    context: "component mean",
                });
            }
            let (factor, half_log_det) = match &c.covariance {
                Covariance::Isotropic(s) => {
                    let var = s * s + var_add;
                    if !(var > 0.0) || !var.is_finite() {
                        return Err(Error::NotPositiveDefinite { component: i });
                    }
                    (Factor::Isotropic(sqrt(var)), 0.5 * dim as f64 * log(var))
                }
                Covariance::Full(cov) => {
                    if cov.rows() != dim || cov.cols() != dim {
                        return Err(Error::dims("component covariance", dim, cov.rows()));
                    }
                    let symmetric = (0..dim).all(|r| {
                        (0..r).all(|s| (cov[(r, s)] - cov[(s, r)]).abs() <= 1e-12 * (1.0 + cov[(r, s)].abs()))
                    });
                    if !symmetric {
                        return Err(Error::NotPositiveDefinite { component: i });
                    }
                    let mut shifted = cov.clone();
                    for d in 0..dim {
                        shifted[(d, d)] += var_add;
                    }
                    let l = cholesky(&shifted).ok_or(Error::NotPositiveDefinite { component: i })?;
                    let hld = (0..dim).map(|d| log(l[(d, d)])).sum();
                    (Factor::Full(l), hld)
                }
            };
            comps.push(Prepared {
                log_weight: log(c.weight),
                mean: c.mean.clone(),
                factor,
                log_norm: -half_log_det - 0.5 * dim as f64 * LN_2PI,
            });
        }
        Ok(Mixture {
            dim,
            weights: self.components.iter().map(|c| c.weight).collect(),
            comps,
        })
    }
}

impl Mixture {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-component `log w_c + log N(x; mu_c, Σ_c)`.
    pub fn component_log_terms(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::dims("density input", self.dim, x.len()));
        }
        Ok(self
            .comps
            .iter()
            .map(|c| {
                let diff: Vec<f64> = x.iter().zip(&c.mean).map(|(a, m)| a - m).collect();
                let quad = match &c.factor {
                    Factor::Isotropic(s) => diff.iter().map(|d| d * d).sum::<f64>() / (s * s),
                    Factor::Full(l) => forward_substitute(l, &diff).iter().map(|y| y * y).sum(),
                };
                c.log_weight + c.log_norm - 0.5 * quad
            })
            .collect())
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let terms = self.component_log_terms(x)?;
        Ok(log_sum_exp(terms.iter().copied()))
    }

    fn sample_one(&self, rng: &mut crate::Rng) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = self.comps.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                idx = i;
                break;
            }
        }
        let c = &self.comps[idx];
        let z: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        match &c.factor {
            Factor::Isotropic(s) => c.mean.iter().zip(&z).map(|(m, z)| m + s * z).collect(),
            Factor::Full(l) => {
                let lz = l.mul_vec(&z).expect("factor matches mixture dimension");
                c.mean.iter().zip(&lz).map(|(m, v)| m + v).collect()
            }
        }
    }

    /// `n` i.i.d. draws, deterministic given `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = crate::seeded_rng(seed, 0);
        (0..n).map(|_| self.sample_one(&mut rng)).collect()
    }

    /// Index of the component that most likely produced `x`.
    pub fn nearest_component(&self, x: &[f64]) -> Result<usize> {
        let terms = self.component_log_terms(x)?;
        Ok(terms
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0))
    }
}

/// I.i.d. generator draws from `spec`, deterministic given `seed`.
pub fn sample_generators(spec: &GeneratorSpec, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::config("n", "must be at least 1"));
    }
    Ok(spec.prepare()?.sample(n, seed))
}

/// Exact `log p_mu(x)`.
pub fn gmm_log_density(spec: &GeneratorSpec, x: &[f64]) -> Result<f64> {
    spec.prepare()?.log_density(x)
}

/// Exact log-density of transformed samples `x = mu + sigma_T z`.
pub fn noisy_density_log(spec: &GeneratorSpec, t: &TransformSpec, x: &[f64]) -> Result<f64> {
    spec.prepare_with_noise(t.effective_sigma())?.log_density(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    #[default]
    None,
    AdditiveGaussian,
}

/// The view operator: identity, or additive `N(0, sigma_t² I)` noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    pub kind: TransformKind,
    #[serde(default)]
    pub sigma_t: f64,
}

impl TransformSpec {
    pub const NONE: TransformSpec = TransformSpec {
        kind: TransformKind::None,
        sigma_t: 0.0,
    };

    pub fn additive(sigma_t: f64) -> Self {
        Self {
            kind: TransformKind::AdditiveGaussian,
            sigma_t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == TransformKind::AdditiveGaussian && !(self.sigma_t >= 0.0 && self.sigma_t.is_finite()) {
            return Err(Error::config("sigma_t", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// Noise scale actually applied; zero for the identity transform.
    pub fn effective_sigma(&self) -> f64 {
        match self.kind {
            TransformKind::None => 0.0,
            TransformKind::AdditiveGaussian => self.sigma_t,
        }
    }

    /// True when the transform leaves every input unchanged.
    pub fn is_identity(&self) -> bool {
        self.effective_sigma() == 0.0
    }
}

/// One random view of `x`. The identity transform draws nothing from `rng`.
pub fn apply_transform(x: &[f64], t: &TransformSpec, rng: &mut crate::Rng) -> Vec<f64> {
    let sigma = t.effective_sigma();
    if sigma == 0.0 {
        return x.to_vec();
    }
    x.iter()
        .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Clean generator samples plus everything needed to regenerate them.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub generators: Vec<Vec<f64>>,
    pub spec: GeneratorSpec,
    pub transform: TransformSpec,
    pub seed: u64,
}

impl SynthDataset {
    pub fn generate(spec: GeneratorSpec, transform: TransformSpec, n: usize, seed: u64) -> Result<Self> {
        transform.validate()?;
        let generators = sample_generators(&spec, n, seed)?;
        Ok(Self {
            generators,
            spec,
            transform,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }
}
