//! A fully connected classifier with hand-derived backpropagation.
//!
//! Parameters live in one flat vector so optimizers and finite-difference
//! checks can treat them uniformly. Layer `l` stores its weight matrix
//! row-major as `[out][in]`, followed by its `out` biases.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Activations cached by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// `layers[0]` is the input, the last entry the softmax probabilities.
    layers: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Row-major `batch x K` class probabilities.
    pub fn probs(&self) -> &[f64] {
        self.layers.last().expect("at least input and output")
    }
}

pub struct Gradients {
    pub params: Vec<f64>,
    /// Row-major `batch x input_dim`; present when requested.
    pub inputs: Option<Vec<f64>>,
}

fn softmax_rows(z: &mut [f64], k: usize) {
    for row in z.chunks_exact_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Mlp {
    /// `sizes` runs from input width through hidden widths to the class
    /// count; two entries give a linear softmax model.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::field("layers", "need at least input and output widths, all positive"));
        }
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = match activation {
                Activation::Relu => (2.0 / fan_in as f64).sqrt(),
                Activation::Tanh => (1.0 / fan_in as f64).sqrt(),
            };
            let normal = Normal::new(0.0, scale).expect("positive scale");
            params.extend((0..fan_in * fan_out).map(|_| normal.sample(rng)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            activation,
            params,
        })
    }

    pub fn from_params(sizes: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if sizes.len() < 2 || params.len() != expected {
            return Err(Error::Shape(format!(
                "{} parameters for layers {sizes:?}, expected {expected}",
                params.len()
            )));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            activation,
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offsets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.sizes.windows(2).map(move |w| {
            let o = offset;
            offset += w[0] * w[1] + w[1];
            (o, w[0], w[1])
        })
    }

    pub fn forward(&self, inputs: &[f64]) -> Result<ForwardCache> {
        let d = self.input_dim();
        if inputs.len() % d != 0 {
            return Err(Error::Shape(format!("input length {} is not a multiple of {d}", inputs.len())));
        }
        let batch = inputs.len() / d;
        let n_layers = self.sizes.len() - 1;
        let mut layers = Vec::with_capacity(n_layers + 1);
        layers.push(inputs.to_vec());
        for (l, (offset, fan_in, fan_out)) in self.layer_offsets().enumerate() {
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let bias = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let prev = &layers[l];
            let mut out = vec![0.0; batch * fan_out];
            for (x, z) in prev.chunks_exact(fan_in).zip(out.chunks_exact_mut(fan_out)) {
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj = bias[j] + dot(&weights[j * fan_in..(j + 1) * fan_in], x);
                }
            }
            if l + 1 < n_layers {
                for v in &mut out {
                    *v = self.activation.apply(*v);
                }
            } else {
                softmax_rows(&mut out, fan_out);
            }
            layers.push(out);
        }
        Ok(ForwardCache { batch, layers })
    }

    /// Row-major class probabilities for a batch.
    pub fn predict(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(inputs)?.layers.pop().expect("output layer"))
    }

    /// Gradients of the mean soft cross-entropy over the batch.
    pub fn backward(&self, cache: &ForwardCache, targets: &[f64], want_inputs: bool) -> Result<Gradients> {
        let k = self.num_classes();
        if targets.len() != cache.batch * k {
            return Err(Error::Shape(format!(
                "{} target entries for batch {} x {k}",
                targets.len(),
                cache.batch
            )));
        }
        let inv_n = 1.0 / cache.batch as f64;
        let mut delta: Vec<f64> = cache
            .probs()
            .iter()
            .zip(targets)
            .map(|(p, t)| (p - t) * inv_n)
            .collect();
        let mut grads = vec![0.0; self.params.len()];
        let offsets: Vec<_> = self.layer_offsets().collect();
        let mut input_grad = None;
        for (l, &(offset, fan_in, fan_out)) in offsets.iter().enumerate().rev() {
            let prev = &cache.layers[l];
            let (gw, rest) = grads[offset..].split_at_mut(fan_in * fan_out);
            let gb = &mut rest[..fan_out];
            for (x, dz) in prev.chunks_exact(fan_in).zip(delta.chunks_exact(fan_out)) {
                for (j, &dzj) in dz.iter().enumerate() {
                    if dzj != 0.0 {
                        axpy(dzj, x, &mut gw[j * fan_in..(j + 1) * fan_in]);
                        gb[j] += dzj;
                    }
                }
            }
            if l == 0 && !want_inputs {
                break;
            }
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let mut dprev = vec![0.0; cache.batch * fan_in];
            for (dx, dz) in dprev.chunks_exact_mut(fan_in).zip(delta.chunks_exact(fan_out)) {
                for (j, &dzj) in dz.iter().enumerate() {
                    if dzj != 0.0 {
                        axpy(dzj, &weights[j * fan_in..(j + 1) * fan_in], dx);
                    }
                }
            }
            if l == 0 {
                input_grad = Some(dprev);
                break;
            }
            for (g, a) in dprev.iter_mut().zip(prev) {
                *g *= self.activation.derivative(*a);
            }
            delta = dprev;
        }
        Ok(Gradients {
            params: grads,
            inputs: input_grad,
        })
    }

    /// Mean soft cross-entropy of the batch; probabilities are floored at
    /// `PROB_FLOOR`.
    pub fn loss(&self, inputs: &[f64], targets: &[f64]) -> Result<f64> {
        let probs = self.predict(inputs)?;
        let k = self.num_classes();
        Ok(super::metrics::soft_ce_rows(&probs, targets, k).0)
    }
}

/// SGD with classical momentum.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64, num_params: usize) -> Self {
        Sgd {
            lr,
            momentum,
            weight_decay,
            velocity: vec![0.0; num_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            *v = self.momentum * *v + g + self.weight_decay * *p;
            *p -= self.lr * *v;
        }
    }
}
