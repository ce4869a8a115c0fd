//! Norm concentration of `Z/√K` for `Z ~ N(0, I_K)`.
//!
//! `‖Z‖²/K` is a scaled chi-square with mean 1 and variance `2/K`, so the
//! normalized Gaussian piles up on the unit sphere as `K` grows. The same
//! statistics are computed for encoder embeddings to check that a trained
//! model produces approximately `N(0, I/K)` outputs.

use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, sqrt};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::encoder::Encoder;
use crate::error::{Error, Result};

/// Leading coordinates entering the isotropy statistic. Capped so the
/// pairwise correlations cost `O(n · 32²)` regardless of `K`.
pub const UNIFORMITY_COORDS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub mean_norm: f64,
    /// Sample variance of `‖X‖²`.
    pub var_sq_norm: f64,
    /// Max absolute correlation between two coordinates of `X/‖X‖`.
    pub uniformity_stat: f64,
    pub seed: Option<u64>,
}

/// Streaming accumulator for the report statistics.
struct Accumulator {
    k: usize,
    tracked: usize,
    n: usize,
    sum_norm: f64,
    sq_norms: Vec<f64>,
    sum_u: Vec<f64>,
    cross: Vec<f64>,
}

impl Accumulator {
    fn new(k: usize) -> Self {
        let tracked = k.min(UNIFORMITY_COORDS);
        Self {
            k,
            tracked,
            n: 0,
            sum_norm: 0.0,
            sq_norms: Vec::new(),
            sum_u: vec![0.0; tracked],
            cross: vec![0.0; tracked * tracked],
        }
    }

    fn push(&mut self, x: &[f64]) {
        let sq: f64 = x.iter().map(|v| v * v).sum();
        let norm = sqrt(sq);
        self.n += 1;
        self.sum_norm += norm;
        self.sq_norms.push(sq);
        if norm > 0.0 {
            let t = self.tracked;
            for a in 0..t {
                let ua = x[a] / norm;
                self.sum_u[a] += ua;
                for (c, xb) in self.cross[a * t + a..(a + 1) * t].iter_mut().zip(&x[a..t]) {
                    *c += ua * xb / norm;
                }
            }
        }
    }

    fn finish(self, seed: Option<u64>) -> Result<ConcentrationReport> {
        if self.n < 2 {
            return Err(Error::config("n", "need at least two samples"));
        }
        let nf = self.n as f64;
        let t = self.tracked;
        let cov = |a: usize, b: usize| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            (self.cross[lo * t + hi] - self.sum_u[a] * self.sum_u[b] / nf) / (nf - 1.0)
        };
        let mut uniformity: f64 = 0.0;
        for a in 0..t {
            for b in a + 1..t {
                let denom = sqrt(cov(a, a) * cov(b, b));
                if denom > 0.0 {
                    uniformity = uniformity.max(fabs(cov(a, b) / denom));
                }
            }
        }
        let report = ConcentrationReport {
            k: self.k,
            n: self.n,
            mean_norm: self.sum_norm / nf,
            var_sq_norm: crate::num::variance(&self.sq_norms),
            uniformity_stat: uniformity,
            seed,
        };
        if !(report.mean_norm.is_finite() && report.var_sq_norm.is_finite() && report.uniformity_stat.is_finite()) {
            return Err(Error::NonFinite {
                context: "concentration statistics",
            });
        }
        Ok(report)
    }
}

/// Statistics of `n` draws of `Z/√K`, deterministic given `seed`.
pub fn concentration_report(k: usize, n: usize, seed: u64) -> Result<ConcentrationReport> {
    if k == 0 {
        return Err(Error::config("dim", "must be at least 1"));
    }
    if n < 2 {
        return Err(Error::config("n", "need at least two samples"));
    }
    let mut rng = crate::seeded_rng(seed, 0);
    let scale = 1.0 / sqrt(k as f64);
    let mut acc = Accumulator::new(k);
    let mut x = vec![0.0; k];
    for _ in 0..n {
        for v in x.iter_mut() {
            *v = scale * rng.sample::<f64, _>(StandardNormal);
        }
        acc.push(&x);
    }
    acc.finish(Some(seed))
}

/// The same statistics over embeddings `f(x)` of the given inputs.
pub fn embedding_gaussianity_report<E: Encoder + ?Sized>(encoder: &E, xs: &[Vec<f64>]) -> Result<ConcentrationReport> {
    if xs.is_empty() {
        return Err(Error::Empty { context: "inputs" });
    }
    let mut acc = Accumulator::new(encoder.output_dim());
    for x in xs {
        acc.push(&encoder.forward(x)?);
    }
    acc.finish(None)
}
