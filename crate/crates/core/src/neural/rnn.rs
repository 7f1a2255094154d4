use rand::Rng;

use super::{
    affine_accumulate, backprop_input, glorot_uniform, leaky_relu, leaky_relu_grad, outer_accumulate, Parameters,
};
use crate::error::{Error, Result};

/// Single-layer recurrent network with a leaky-ReLU cell and a linear
/// readout of the final hidden state:
///
/// ```text
/// h_0 = 0
/// h_t = lrelu(W_in^T x_t + W_rec^T h_{t-1} + b)
/// y   = W_out^T h_T + b_out
/// ```
///
/// All weight matrices are stored fan_in x fan_out, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Rnn {
    pub input_dim: usize,
    pub hidden: usize,
    pub output_dim: usize,
    /// Number of input steps the network consumes.
    pub steps: usize,
    pub w_in: Vec<f64>,
    pub w_rec: Vec<f64>,
    pub bias: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

impl Rnn {
    pub fn zeros(input_dim: usize, hidden: usize, output_dim: usize, steps: usize) -> Self {
        Self {
            input_dim,
            hidden,
            output_dim,
            steps,
            w_in: vec![0.0; input_dim * hidden],
            w_rec: vec![0.0; hidden * hidden],
            bias: vec![0.0; hidden],
            w_out: vec![0.0; hidden * output_dim],
            b_out: vec![0.0; output_dim],
        }
    }

    pub fn random(input_dim: usize, hidden: usize, output_dim: usize, steps: usize, rng: &mut impl Rng) -> Self {
        Self {
            w_in: glorot_uniform(rng, input_dim, hidden),
            w_rec: glorot_uniform(rng, hidden, hidden),
            w_out: glorot_uniform(rng, hidden, output_dim),
            ..Self::zeros(input_dim, hidden, output_dim, steps)
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let ok = self.w_in.len() == self.input_dim * self.hidden
            && self.w_rec.len() == self.hidden * self.hidden
            && self.bias.len() == self.hidden
            && self.w_out.len() == self.hidden * self.output_dim
            && self.b_out.len() == self.output_dim
            && self.steps > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::contract("recurrent network blocks do not match its shape"))
        }
    }

    fn check_history(&self, history: &[f64]) -> Result<()> {
        if history.len() != self.steps * self.input_dim {
            return Err(Error::contract(format!(
                "history has {} values, expected {} steps of {}",
                history.len(),
                self.steps,
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Runs the flattened history (`steps` rows of `input_dim`) and returns
    /// the readout.
    pub fn forward(&self, history: &[f64]) -> Result<Vec<f64>> {
        self.check_history(history)?;
        let (_, hs) = self.unroll(history);
        Ok(self.readout(hs.last().expect("steps > 0")))
    }

    /// Pre-activations and hidden states for every step (hs[0] is h_1).
    fn unroll(&self, history: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut zs = Vec::with_capacity(self.steps);
        let mut hs: Vec<Vec<f64>> = Vec::with_capacity(self.steps);
        for x in history.chunks_exact(self.input_dim) {
            let mut z = self.bias.clone();
            affine_accumulate(&mut z, &self.w_in, x);
            if let Some(h_prev) = hs.last() {
                affine_accumulate(&mut z, &self.w_rec, h_prev);
            }
            hs.push(z.iter().map(|&v| leaky_relu(v)).collect());
            zs.push(z);
        }
        (zs, hs)
    }

    fn readout(&self, h: &[f64]) -> Vec<f64> {
        let mut y = self.b_out.clone();
        affine_accumulate(&mut y, &self.w_out, h);
        y
    }

    /// Mean squared error over the readout and its gradient, accumulated
    /// into `grad` with weight `scale`.
    pub fn accumulate_mse_gradient(&self, history: &[f64], target: &[f64], scale: f64, grad: &mut Rnn) -> Result<f64> {
        self.check_history(history)?;
        if target.len() != self.output_dim {
            return Err(Error::contract(format!(
                "target has {} values, expected {}",
                target.len(),
                self.output_dim
            )));
        }
        let (zs, hs) = self.unroll(history);
        let y = self.readout(hs.last().expect("steps > 0"));
        let m = self.output_dim as f64;
        let mut loss = 0.0;
        let d_out: Vec<f64> = y
            .iter()
            .zip(target)
            .map(|(p, t)| {
                let e = p - t;
                loss += e * e;
                scale * 2.0 * e / m
            })
            .collect();
        loss /= m;

        for (b, d) in grad.b_out.iter_mut().zip(&d_out) {
            *b += d;
        }
        outer_accumulate(&mut grad.w_out, &hs[self.steps - 1], &d_out);
        let mut dh = vec![0.0; self.hidden];
        backprop_input(&mut dh, &self.w_out, &d_out);

        let mut dz = vec![0.0; self.hidden];
        for t in (0..self.steps).rev() {
            for ((d, h), z) in dz.iter_mut().zip(&dh).zip(&zs[t]) {
                *d = h * leaky_relu_grad(*z);
            }
            for (b, d) in grad.bias.iter_mut().zip(&dz) {
                *b += d;
            }
            let x = &history[t * self.input_dim..(t + 1) * self.input_dim];
            outer_accumulate(&mut grad.w_in, x, &dz);
            if t > 0 {
                outer_accumulate(&mut grad.w_rec, &hs[t - 1], &dz);
                backprop_input(&mut dh, &self.w_rec, &dz);
            }
        }
        Ok(loss)
    }

    /// Gradient of the mean squared error between the readout and `target`.
    pub fn mse_gradient(&self, history: &[f64], target: &[f64]) -> Result<(Rnn, f64)> {
        let mut grad = self.zeros_like();
        let loss = self.accumulate_mse_gradient(history, target, 1.0, &mut grad)?;
        Ok((grad, loss))
    }
}

impl Parameters for Rnn {
    fn blocks(&self) -> Vec<&[f64]> {
        vec![&self.w_in, &self.w_rec, &self.bias, &self.w_out, &self.b_out]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.w_in,
            &mut self.w_rec,
            &mut self.bias,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }
}
