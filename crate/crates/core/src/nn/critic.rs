use rand::Rng;

use super::dense::{relu_backward, relu_in_place, Dense};
use crate::{Error, Result};

pub const CRITIC_HIDDEN: [usize; 4] = [16, 32, 256, 256];

/// Fully connected value network with ReLU hidden layers and a linear
/// output, multiplied by a fixed `output_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub params: Vec<f64>,
    layers: Vec<Dense>,
    pub output_scale: f64,
}

/// Activations kept from a batched forward pass.
#[derive(Debug, Clone)]
pub struct CriticTape {
    pub batch: usize,
    /// `acts[0]` is the input, `acts[i]` the output of layer `i - 1`
    /// (after ReLU for hidden layers).
    acts: Vec<Vec<f64>>,
}

impl CriticTape {
    /// Network outputs, already multiplied by the output scale.
    pub fn values(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

fn build_layers(input: usize, hidden: &[usize]) -> Vec<Dense> {
    let mut layers = Vec::new();
    let mut prev = input;
    let mut offset = 0;
    for &width in hidden.iter().chain(std::iter::once(&1)) {
        let layer = Dense { input: prev, output: width, offset };
        offset = layer.end();
        prev = width;
        layers.push(layer);
    }
    layers
}

impl CriticNet {
    pub fn new(input_dim: usize, rng: &mut impl Rng) -> Self {
        Self::with_hidden(input_dim, &CRITIC_HIDDEN, rng)
    }

    pub fn with_hidden(input_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(input_dim, hidden);
        for layer in &net.layers {
            layer.init(&mut net.params, layer.glorot_limit(), rng);
        }
        net
    }

    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        let layers = build_layers(input_dim, hidden);
        let count = layers.last().unwrap().end();
        CriticNet { params: vec![0.0; count], layers, output_scale: 1.0 }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.output).collect()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::Dimension { what: "critic input", expected: self.input_dim(), got: len });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.forward_batch(x, 1).values()[0]
    }

    pub fn forward_batch(&self, xs: &[f64], batch: usize) -> CriticTape {
        assert_eq!(xs.len(), batch * self.input_dim(), "critic input size");
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(xs.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&self.params, acts.last().unwrap(), batch);
            if i < last {
                relu_in_place(&mut y);
            } else {
                for v in &mut y {
                    *v *= self.output_scale;
                }
            }
            acts.push(y);
        }
        CriticTape { batch, acts }
    }

    /// Backpropagates `d_out` (derivative of a loss with respect to each
    /// output). Adds the parameter gradient into `grad` and returns the
    /// gradient with respect to the inputs when requested.
    pub fn backward(
        &self,
        tape: &CriticTape,
        d_out: &[f64],
        grad: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        assert_eq!(d_out.len(), tape.batch);
        let mut d: Vec<f64> = d_out.iter().map(|g| g * self.output_scale).collect();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if i + 1 < self.layers.len() {
                relu_backward(&tape.acts[i + 1], &mut d);
            }
            let need = i > 0 || want_input_grad;
            d = layer.backward(&self.params, &tape.acts[i], &d, tape.batch, grad, need)?;
        }
        Some(d)
    }

    /// Gradient of the output with respect to the (normalized) input.
    pub fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        let tape = self.forward_batch(x, 1);
        let mut scratch = vec![0.0; self.params.len()];
        self.backward(&tape, &[1.0], &mut scratch, true).unwrap()
    }

    /// Mean squared error against `targets` plus `l2 * |theta|^2`.
    /// Returns `(data loss, gradient of the total loss)`.
    pub fn loss_and_grad(&self, inputs: &[f64], targets: &[f64], l2: f64) -> (f64, Vec<f64>) {
        let batch = targets.len();
        assert!(batch > 0, "empty batch");
        let tape = self.forward_batch(inputs, batch);
        let residual: Vec<f64> = tape.values().iter().zip(targets).map(|(v, t)| v - t).collect();
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / batch as f64;
        let d_out: Vec<f64> = residual.iter().map(|r| 2.0 * r / batch as f64).collect();
        let mut grad = vec![0.0; self.params.len()];
        self.backward(&tape, &d_out, &mut grad, false);
        super::add_l2_grad(&self.params, l2, &mut grad);
        (loss, grad)
    }
}
