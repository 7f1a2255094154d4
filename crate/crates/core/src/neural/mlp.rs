use rand::Rng;

use super::{
    affine_accumulate, backprop_input, glorot_uniform, leaky_relu, leaky_relu_grad, outer_accumulate, Parameters,
};
use crate::error::{Error, Result};

/// Fully connected layer. `weight` is fan_in x fan_out, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weight: vec![0.0; fan_in * fan_out],
            bias: vec![0.0; fan_out],
        }
    }
}

/// Feedforward network: leaky-ReLU hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations from one forward pass, kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    /// Layer sizes, e.g. `[20, 100, 100, 8]`.
    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random(sizes: &[usize], rng: &mut impl Rng) -> Self {
        Self {
            layers: sizes
                .windows(2)
                .map(|w| Dense {
                    fan_in: w[0],
                    fan_out: w[1],
                    weight: glorot_uniform(rng, w[0], w[1]),
                    bias: vec![0.0; w[1]],
                })
                .collect(),
        }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("network has no layers"));
        }
        for l in &layers {
            if l.weight.len() != l.fan_in * l.fan_out || l.bias.len() != l.fan_out {
                return Err(Error::contract("layer block sizes do not match its shape"));
            }
        }
        if layers.windows(2).any(|w| w[0].fan_out != w[1].fan_in) {
            return Err(Error::contract("layer dimensions do not chain"));
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.fan_out))
            .collect()
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut cache = MlpCache::default();
        self.forward_cached(input, &mut cache);
        cache.acts.pop().unwrap_or_default()
    }

    /// Forward pass that keeps activations in `cache` (reused across calls).
    ///
    /// Panics when `input` does not match the input dimension.
    pub fn forward_cached(&self, input: &[f64], cache: &mut MlpCache) {
        assert_eq!(input.len(), self.input_dim(), "network input dimension mismatch");
        let n = self.layers.len();
        cache.acts.resize_with(n + 1, Vec::new);
        cache.pre.resize_with(n, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = cache.acts.split_at_mut(l + 1);
            let z = &mut cache.pre[l];
            z.clear();
            z.extend_from_slice(&layer.bias);
            affine_accumulate(z, &layer.weight, &done[l]);
            let a = &mut rest[0];
            a.clear();
            if l + 1 == n {
                a.extend_from_slice(z);
            } else {
                a.extend(z.iter().map(|&v| leaky_relu(v)));
            }
        }
    }

    /// Adds the gradient of a loss with output gradient `d_out` (for the
    /// forward pass recorded in `cache`) into `grad`.
    pub fn accumulate_gradient(&self, cache: &MlpCache, d_out: &[f64], grad: &mut Mlp) {
        let n = self.layers.len();
        let mut delta = d_out.to_vec();
        let mut d_prev = Vec::new();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let g = &mut grad.layers[l];
            for (b, d) in g.bias.iter_mut().zip(&delta) {
                *b += d;
            }
            outer_accumulate(&mut g.weight, &cache.acts[l], &delta);
            if l > 0 {
                d_prev.clear();
                d_prev.resize(layer.fan_in, 0.0);
                backprop_input(&mut d_prev, &layer.weight, &delta);
                for (d, z) in d_prev.iter_mut().zip(&cache.pre[l - 1]) {
                    *d *= leaky_relu_grad(*z);
                }
                std::mem::swap(&mut delta, &mut d_prev);
            }
        }
    }

    /// Gradient of `(target_value - Q(input)[target_index])^2` with respect
    /// to every parameter, and the current `Q(input)[target_index]`.
    pub fn squared_error_gradient(&self, input: &[f64], target_index: usize, target_value: f64) -> (Mlp, f64) {
        let mut cache = MlpCache::default();
        self.forward_cached(input, &mut cache);
        let q = cache.output()[target_index];
        let mut d_out = vec![0.0; self.output_dim()];
        d_out[target_index] = 2.0 * (q - target_value);
        let mut grad = self.zeros_like();
        self.accumulate_gradient(&cache, &d_out, &mut grad);
        (grad, q)
    }
}

impl Parameters for Mlp {
    fn blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}
