//! Minimal neural substrate: a leaky-ReLU feedforward network, a simple
//! recurrent network, hand-written gradients, Adam, and a binary
//! checkpoint format shared by all networks.

mod adam;
pub mod checkpoint;
mod mlp;
mod rnn;

pub use adam::AdamState;
pub use mlp::{Dense, Mlp, MlpCache};
pub use rnn::Rnn;

use rand::Rng;

pub const LEAKY_SLOPE: f64 = 0.01;

pub fn leaky_relu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

pub(crate) fn leaky_relu_grad(z: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// A set of parameter blocks with a fixed layout. Gradients use the same
/// type as the parameters they differentiate.
pub trait Parameters: Clone {
    fn blocks(&self) -> Vec<&[f64]>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for b in z.blocks_mut() {
            b.fill(0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    fn same_shape(&self, other: &Self) -> bool {
        let a = self.blocks();
        let b = other.blocks();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
    }

    fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    fn scale(&mut self, k: f64) {
        for b in self.blocks_mut() {
            b.iter_mut().for_each(|x| *x *= k);
        }
    }

    fn copy_from(&mut self, other: &Self) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            dst.copy_from_slice(src);
        }
    }
}

impl Parameters for Vec<f64> {
    fn blocks(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

/// Uniform in ±sqrt(6 / (fan_in + fan_out)).
pub(crate) fn glorot_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect()
}

/// `out += x * row` over the fan-out axis of a fan_in x fan_out matrix.
#[inline]
pub(crate) fn affine_accumulate(out: &mut [f64], weight: &[f64], input: &[f64]) {
    let n = out.len();
    for (x, row) in input.iter().zip(weight.chunks_exact(n)) {
        let x = *x;
        if x == 0.0 {
            continue;
        }
        for (o, w) in out.iter_mut().zip(row) {
            *o += w * x;
        }
    }
}

/// `d_in[j] = sum_i W[j, i] * delta[i]`
#[inline]
pub(crate) fn backprop_input(d_in: &mut [f64], weight: &[f64], delta: &[f64]) {
    let n = delta.len();
    for (d, row) in d_in.iter_mut().zip(weight.chunks_exact(n)) {
        *d = dot(row, delta);
    }
}

/// `W[j, i] += x[j] * delta[i]`
#[inline]
pub(crate) fn outer_accumulate(grad: &mut [f64], input: &[f64], delta: &[f64]) {
    let n = delta.len();
    for (x, row) in input.iter().zip(grad.chunks_exact_mut(n)) {
        let x = *x;
        if x == 0.0 {
            continue;
        }
        for (g, d) in row.iter_mut().zip(delta) {
            *g += x * d;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four lanes so the reduction vectorizes without reassociation.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * k + l] * b[4 * k + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in chunks * 4..a.len() {
        s += a[k] * b[k];
    }
    s
}
