//! Feed-forward angle encoder: a scalar input mapped to circuit rotation angles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// Row-major `outputs × inputs`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.biases.len()
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// ELU with unit scale.
#[inline]
pub fn elu(z: f64) -> f64 {
    if z >= 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

#[inline]
fn elu_derivative(z: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        z.exp()
    }
}

/// MLP with ELU on hidden layers and a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleEncoder {
    pub layers: Vec<DenseLayer>,
}

/// Pre-activations of every layer from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input to layer `l` (post-activation of layer `l−1`).
    inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.pre_activations.last().expect("non-empty encoder")
    }
}

impl AngleEncoder {
    /// Uniform `[−1/√fan_in, 1/√fan_in]` initialisation of weights and biases.
    pub fn init<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights = (0..fan_out)
                    .map(|_| (0..fan_in).map(|_| rng.random_range(-bound..=bound)).collect())
                    .collect();
                let biases = (0..fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
                DenseLayer { weights, biases }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Every weight and bias zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| DenseLayer { weights: vec![vec![0.0; w[0]]; w[1]], biases: vec![0.0; w[1]] })
            .collect();
        Ok(Self { layers })
    }

    fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Config(format!("invalid encoder layer sizes {layer_sizes:?}")));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers.first().map_or(0, DenseLayer::inputs)];
        sizes.extend(self.layers.iter().map(DenseLayer::outputs));
        sizes
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::outputs)
    }

    /// Shape consistency between consecutive layers.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("encoder has no layers".into()));
        }
        let mut width = self.layers[0].inputs();
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.weights.len() != layer.biases.len() || layer.weights.iter().any(|r| r.len() != width) {
                return Err(Error::Config(format!("encoder layer {i} has inconsistent shape")));
            }
            width = layer.outputs();
        }
        Ok(())
    }

    pub fn forward(&self, x: f64) -> Vec<f64> {
        self.forward_cached(x).output().to_vec()
    }

    pub fn forward_cached(&self, x: f64) -> ForwardCache {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = vec![x];
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&current);
            inputs.push(current);
            current = if i == last { z.clone() } else { z.iter().map(|&v| elu(v)).collect() };
            pre_activations.push(z);
        }
        ForwardCache { inputs, pre_activations }
    }

    /// Vector–Jacobian product: gradient of `Σ_j grad_out_j · θ_j(x)` with
    /// respect to every weight and bias, in the same shape as `self`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64]) -> AngleEncoder {
        let mut grads: Vec<DenseLayer> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[l];
            let weights = delta.iter().map(|d| input.iter().map(|v| d * v).collect()).collect();
            grads.push(DenseLayer { weights, biases: delta.clone() });
            if l > 0 {
                let z_prev = &cache.pre_activations[l - 1];
                delta = (0..layer.inputs())
                    .map(|i| {
                        let back: f64 = layer.weights.iter().zip(&delta).map(|(row, d)| row[i] * d).sum();
                        back * elu_derivative(z_prev[i])
                    })
                    .collect();
            }
        }
        grads.reverse();
        AngleEncoder { layers: grads }
    }

    /// All weights then biases of each layer, flattened in layer order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(layer.weights.iter().flatten());
            out.extend(&layer.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let mut it = params.iter();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().flatten() {
                *w = *it.next().expect("parameter vector too short");
            }
            for b in &mut layer.biases {
                *b = *it.next().expect("parameter vector too short");
            }
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.outputs() * (l.inputs() + 1)).sum()
    }

    /// `self += scale · other` (shapes must match).
    pub fn add_scaled(&mut self, other: &AngleEncoder, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (ra, rb) in a.weights.iter_mut().zip(&b.weights) {
                for (wa, wb) in ra.iter_mut().zip(rb) {
                    *wa += scale * wb;
                }
            }
            for (ba, bb) in a.biases.iter_mut().zip(&b.biases) {
                *ba += scale * bb;
            }
        }
    }

    pub fn zeros_like(&self) -> AngleEncoder {
        let mut z = self.clone();
        z.set_params(&vec![0.0; self.num_params()]);
        z
    }
}

/// `encoder(x)`: the rotation angles for input `x`.
pub fn encoder_forward(x: f64, encoder: &AngleEncoder) -> Vec<f64> {
    encoder.forward(x)
}
