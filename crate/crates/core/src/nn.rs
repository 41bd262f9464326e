//! A small dense network with tanh hidden layers and exact reverse-mode
//! gradients.
//!
//! Parameters are addressed as one flat vector, layer by layer, weights
//! (row-major, `out × in`) before biases. Gradients use the same layout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().copied());
        for (o, row) in out.iter_mut().zip(self.weights.chunks_exact(self.inputs)) {
            *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Affine layers joined by tanh; the last layer is linear.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    #[serde(skip)]
    generation: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations retained by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    /// Input to each layer; `inputs[k + 1]` is `tanh` of layer `k`'s output.
    inputs: Vec<Vec<f64>>,
    generation: u64,
}

impl Mlp {
    /// Glorot-uniform initialization; the last layer's weights are further
    /// scaled by `output_scale` and all biases start at zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output_scale: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least one layer");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let scale = if k == last { output_scale } else { 1.0 };
                let mut layer = Dense::zeros(fan_in, fan_out);
                for x in &mut layer.weights {
                    *x = rng.gen_range(-limit..limit) * scale;
                }
                layer
            })
            .collect();
        Self { layers, generation: 0 }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("network has no layers".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Dimension(format!("layer {k} tensors do not match its shape")));
            }
            if k > 0 && layers[k - 1].outputs != l.inputs {
                return Err(Error::Dimension(format!(
                    "layer {k} expects {} inputs, previous layer gives {}",
                    l.inputs,
                    layers[k - 1].outputs
                )));
            }
        }
        Ok(Self { layers, generation: 0 })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "{} parameters for a network with {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut at = 0;
        for l in &mut self.layers {
            let (w, b) = (l.weights.len(), l.bias.len());
            l.weights.copy_from_slice(&flat[at..at + w]);
            l.bias.copy_from_slice(&flat[at + w..at + w + b]);
            at += w + b;
        }
        self.generation += 1;
        Ok(())
    }

    /// `θ ← θ − lr · g`.
    pub fn descend(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        let mut p = self.params();
        if grad.len() != p.len() {
            return Err(Error::Dimension(format!("{} gradients for {} parameters", grad.len(), p.len())));
        }
        for (x, g) in p.iter_mut().zip(grad) {
            *x -= lr * g;
        }
        self.set_params(&p)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    /// Output only.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Cache)> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input of length {} for a network expecting {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_vec());
        let mut out = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            layer.forward(&inputs[k], &mut out);
            if k + 1 < self.layers.len() {
                inputs.push(out.iter().map(|v| v.tanh()).collect());
            }
        }
        Ok((
            out,
            Cache {
                inputs,
                generation: self.generation,
            },
        ))
    }

    /// Gradient of `Σ output_gradient · output` with respect to every
    /// parameter, in flat layout.
    pub fn backward(&self, cache: &Cache, output_gradient: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.num_params()];
        self.backward_into(cache, output_gradient, &mut grad)?;
        Ok(grad)
    }

    /// Accumulates the gradient into `grad` instead of allocating.
    pub fn backward_into(&self, cache: &Cache, output_gradient: &[f64], grad: &mut [f64]) -> Result<()> {
        if cache.generation != self.generation || cache.inputs.len() != self.layers.len() {
            return Err(Error::Numerical(
                "stale cache: parameters changed since the forward pass".into(),
            ));
        }
        if output_gradient.len() != self.output_dim() || grad.len() != self.num_params() {
            return Err(Error::Dimension("gradient buffer does not match the network".into()));
        }
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |at, l| {
                let start = *at;
                *at += l.num_params();
                Some(start)
            })
            .collect();

        let mut delta = output_gradient.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let x = &cache.inputs[k];
            let base = offsets[k];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut grad[base + o * layer.inputs..base + (o + 1) * layer.inputs];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            let bias_at = base + layer.weights.len();
            for (g, d) in grad[bias_at..bias_at + layer.outputs].iter_mut().zip(&delta) {
                *g += d;
            }
            if k == 0 {
                break;
            }
            // Through W then through tanh, whose output is x.
            let mut next = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (n, w) in next.iter_mut().zip(row) {
                    *n += d * w;
                }
            }
            for (n, a) in next.iter_mut().zip(x) {
                *n *= 1.0 - a * a;
            }
            delta = next;
        }
        Ok(())
    }
}

/// Scales `grad` down so its Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    #[default]
    Sgd,
    /// Adam with bias correction (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
    Adam,
}

/// First-order optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, num_params: usize) -> Self {
        let n = if kind == OptimizerKind::Adam { num_params } else { 0 };
        Self {
            kind,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grad: &[f64], lr: f64) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => net.descend(grad, lr),
            OptimizerKind::Adam => {
                if grad.len() != self.m.len() {
                    return Err(Error::Dimension(format!("{} gradients for {} moments", grad.len(), self.m.len())));
                }
                self.t += 1;
                let c1 = 1.0 - Self::BETA1.powi(self.t);
                let c2 = 1.0 - Self::BETA2.powi(self.t);
                let direction: Vec<f64> = grad
                    .iter()
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                    .map(|(&g, (m, v))| {
                        *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                        *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                        (*m / c1) / ((*v / c2).sqrt() + Self::EPS)
                    })
                    .collect();
                net.descend(&direction, lr)
            }
        }
    }
}

pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}
