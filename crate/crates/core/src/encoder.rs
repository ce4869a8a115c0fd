//! Smooth MLP encoders.
//!
//! Two kinds of derivative are needed from one network: reverse-mode
//! parameter gradients to train it, and the exact input Jacobian
//! `J_f(x) = W_L · D_{L-1} · W_{L-1} ··· D_1 · W_1` to score with it.
//! `D_l` is the diagonal of activation derivatives at layer `l`'s
//! pre-activation. The last layer is linear.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs, log1p, sqrt};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::num::{normal_cdf, normal_pdf};

/// Anything with a forward map and an exact input Jacobian.
pub trait Encoder {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// `output_dim x input_dim` Jacobian at `x`.
    fn input_jacobian(&self, x: &[f64]) -> Result<Matrix>;
}

/// Hidden-layer nonlinearity. All are smooth; ReLU is deliberately absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Softplus,
    Gelu,
}

/// `tanh` through a single `exp`; absolute error within a few ulps of 1.
#[inline]
fn fast_tanh(x: f64) -> f64 {
    let e = exp(-2.0 * fabs(x));
    libm::copysign((1.0 - e) / (1.0 + e), x)
}

impl Activation {
    #[inline]
    pub fn value(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => fast_tanh(x),
            Activation::Softplus => x.max(0.0) + log1p(exp(-fabs(x))),
            Activation::Gelu => x * normal_cdf(x),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = fast_tanh(x);
                1.0 - t * t
            }
            Activation::Softplus => {
                if x >= 0.0 {
                    1.0 / (1.0 + exp(-x))
                } else {
                    let e = exp(x);
                    e / (1.0 + e)
                }
            }
            Activation::Gelu => normal_cdf(x) + x * normal_pdf(x),
        }
    }

    /// `(value(x), derivative(x))` sharing the expensive part.
    #[inline]
    pub fn value_and_derivative(self, x: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let t = fast_tanh(x);
                (t, 1.0 - t * t)
            }
            _ => (self.value(x), self.derivative(x)),
        }
    }
}

/// Architecture `input_dim -> hidden_widths... -> embed_dim`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_widths: Vec<usize>,
    pub embed_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input_dim", "must be at least 1"));
        }
        if self.embed_dim == 0 {
            return Err(Error::config("embed_dim", "must be at least 1"));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::config("hidden_widths", "widths must be at least 1"));
        }
        Ok(())
    }

    /// `(in, out)` for each layer in order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(self.embed_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    /// `out x in`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Self {
        Layer {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }
}

/// Spec plus weights: a complete, evaluable encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    spec: EncoderSpec,
    layers: Vec<Layer>,
}

/// Parameter-shaped gradient buffers, one [`Layer`] per encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(l.bias.iter()).copied())
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weight.as_mut_slice().iter_mut().for_each(|v| *v *= c);
            l.bias.iter_mut().for_each(|v| *v *= c);
        }
    }
}

/// Activations cached by a batched forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input to each layer, `batch x in_l`.
    inputs: Vec<Matrix>,
    /// Activation derivative at each hidden pre-activation, `batch x out_l`.
    derivs: Vec<Matrix>,
    output: Matrix,
}

impl Trace {
    /// Embeddings, `batch x embed_dim`.
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl EncoderParams {
    /// Gaussian weights with std `1/√in` per layer, zero biases.
    pub fn init(spec: &EncoderSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = crate::seeded_rng(seed, 0);
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let std = 1.0 / sqrt(fan_in as f64);
                let weight = Matrix::from_fn(fan_out, fan_in, |_, _| std * rng.sample::<f64, _>(StandardNormal));
                Layer {
                    weight,
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    /// Assembles an encoder from explicit layers, checking every shape against `spec`.
    pub fn from_layers(spec: EncoderSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::dims("layer count", shapes.len(), layers.len()));
        }
        for ((fan_in, fan_out), layer) in shapes.into_iter().zip(&layers) {
            if layer.weight.cols() != fan_in {
                return Err(Error::dims("layer weight columns", fan_in, layer.weight.cols()));
            }
            if layer.weight.rows() != fan_out {
                return Err(Error::dims("layer weight rows", fan_out, layer.weight.rows()));
            }
            if layer.bias.len() != fan_out {
                return Err(Error::dims("layer bias", fan_out, layer.bias.len()));
            }
            if !layer.weight.is_finite() || layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite {
                    context: "encoder parameters",
                });
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(Layer::zeros_like).collect(),
        }
    }

    fn is_last(&self, l: usize) -> bool {
        l + 1 == self.layers.len()
    }

    /// Batched forward pass over the rows of `xs`, keeping what backprop needs.
    pub fn forward_trace(&self, xs: &Matrix) -> Result<Trace> {
        if xs.cols() != self.spec.input_dim {
            return Err(Error::dims("encoder input", self.spec.input_dim, xs.cols()));
        }
        let act = self.spec.activation;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut derivs = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let mut h = xs.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = h.matmul_transpose(&layer.weight)?;
            for r in 0..pre.rows() {
                for (v, b) in pre.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            inputs.push(h);
            if self.is_last(l) {
                h = pre;
            } else {
                let mut d = pre.clone();
                for (v, dv) in pre.as_mut_slice().iter_mut().zip(d.as_mut_slice()) {
                    (*v, *dv) = act.value_and_derivative(*v);
                }
                derivs.push(d);
                h = pre;
            }
        }
        Ok(Trace {
            inputs,
            derivs,
            output: h,
        })
    }

    /// Embeddings of every row of `xs`.
    pub fn forward_batch(&self, xs: &Matrix) -> Result<Matrix> {
        Ok(self.forward_trace(xs)?.output)
    }

    /// Reverse pass: gradients of a scalar loss whose gradient with respect to
    /// the embeddings in `trace` is `upstream` (`batch x embed_dim`), summed over the batch.
    pub fn backward(&self, trace: &Trace, upstream: &Matrix) -> Result<Gradients> {
        let out = &trace.output;
        if upstream.rows() != out.rows() {
            return Err(Error::dims("upstream gradient rows", out.rows(), upstream.rows()));
        }
        if upstream.cols() != out.cols() {
            return Err(Error::dims("upstream gradient columns", out.cols(), upstream.cols()));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            if !self.is_last(l) {
                let d = &trace.derivs[l];
                for (g, dv) in delta.as_mut_slice().iter_mut().zip(d.as_slice()) {
                    *g *= dv;
                }
            }
            let weight = delta.transpose_matmul(&trace.inputs[l])?;
            let mut bias = vec![0.0; delta.cols()];
            for row in delta.row_iter() {
                for (b, g) in bias.iter_mut().zip(row) {
                    *b += g;
                }
            }
            grads.push(Layer { weight, bias });
            if l > 0 {
                delta = delta.matmul(&self.layers[l].weight)?;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Parameter gradients for a batch given per-embedding upstream gradients.
    pub fn param_gradients(&self, xs: &Matrix, upstream: &Matrix) -> Result<Gradients> {
        let trace = self.forward_trace(xs)?;
        self.backward(&trace, upstream)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::dims("encoder input", self.spec.input_dim, x.len()));
        }
        Ok(())
    }
}

impl Encoder for EncoderParams {
    fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn output_dim(&self) -> usize {
        self.spec.embed_dim
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let act = self.spec.activation;
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = layer.weight.mul_vec(&h)?;
            for (v, b) in pre.iter_mut().zip(&layer.bias) {
                *v += b;
            }
            if !self.is_last(l) {
                pre.iter_mut().for_each(|v| *v = act.value(*v));
            }
            h = pre;
        }
        Ok(h)
    }

    fn input_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.check_input(x)?;
        let act = self.spec.activation;
        // Forward once to collect the activation derivatives.
        let mut derivs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers[..self.layers.len() - 1] {
            let mut pre = layer.weight.mul_vec(&h)?;
            for (v, b) in pre.iter_mut().zip(&layer.bias) {
                *v += b;
            }
            let mut d = vec![0.0; pre.len()];
            for (v, dv) in pre.iter_mut().zip(&mut d) {
                (*v, *dv) = act.value_and_derivative(*v);
            }
            derivs.push(d);
            h = pre;
        }
        // Accumulate from the output side so every product has `embed_dim` rows.
        let mut jac = self.layers[self.layers.len() - 1].weight.clone();
        for l in (0..self.layers.len() - 1).rev() {
            let d = &derivs[l];
            for r in 0..jac.rows() {
                for (v, dv) in jac.row_mut(r).iter_mut().zip(d) {
                    *v *= dv;
                }
            }
            jac = jac.matmul(&self.layers[l].weight)?;
        }
        Ok(jac)
    }
}
