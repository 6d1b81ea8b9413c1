use rand::Rng;

use super::dense::{relu_backward, relu_in_place, Dense};
use crate::{Error, Result};

pub const ACTOR_HIDDEN: usize = 256;

/// Policy network: two ReLU layers of equal width whose outputs are summed
/// and passed through a `tanh` output layer scaled by the control bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet {
    pub params: Vec<f64>,
    l1: Dense,
    l2: Dense,
    out: Dense,
    pub u_max: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ActorTape {
    pub batch: usize,
    x: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    merged: Vec<f64>,
    squashed: Vec<f64>,
    controls: Vec<f64>,
}

impl ActorTape {
    /// Row-major `batch x m` controls.
    pub fn controls(&self) -> &[f64] {
        &self.controls
    }
}

impl ActorNet {
    pub fn new(input_dim: usize, u_max: &[f64], rng: &mut impl Rng) -> Self {
        Self::with_width(input_dim, ACTOR_HIDDEN, u_max, rng)
    }

    pub fn with_width(input_dim: usize, width: usize, u_max: &[f64], rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(input_dim, width, u_max);
        for layer in [net.l1, net.l2] {
            layer.init(&mut net.params, layer.glorot_limit(), rng);
        }
        net.out.init(&mut net.params, 1e-3, rng);
        net
    }

    pub fn zeros(input_dim: usize, width: usize, u_max: &[f64]) -> Self {
        let l1 = Dense { input: input_dim, output: width, offset: 0 };
        let l2 = Dense { input: width, output: width, offset: l1.end() };
        let out = Dense { input: width, output: u_max.len(), offset: l2.end() };
        ActorNet { params: vec![0.0; out.end()], l1, l2, out, u_max: u_max.to_vec() }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.l1.input
    }

    pub fn output_dim(&self) -> usize {
        self.out.output
    }

    pub fn width(&self) -> usize {
        self.l1.output
    }

    pub(crate) fn layers(&self) -> [(&'static str, Dense); 3] {
        [("l1", self.l1), ("l2", self.l2), ("out", self.out)]
    }

    pub fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::Dimension { what: "actor input", expected: self.input_dim(), got: len });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_batch(x, 1).controls
    }

    pub fn forward_batch(&self, xs: &[f64], batch: usize) -> ActorTape {
        assert_eq!(xs.len(), batch * self.input_dim(), "actor input size");
        let mut h1 = self.l1.forward(&self.params, xs, batch);
        relu_in_place(&mut h1);
        let mut h2 = self.l2.forward(&self.params, &h1, batch);
        relu_in_place(&mut h2);
        let merged: Vec<f64> = h1.iter().zip(&h2).map(|(a, b)| a + b).collect();
        let mut squashed = self.out.forward(&self.params, &merged, batch);
        for v in &mut squashed {
            *v = v.tanh();
        }
        let m = self.output_dim();
        let controls = squashed
            .iter()
            .enumerate()
            .map(|(i, s)| s * self.u_max[i % m])
            .collect();
        ActorTape { batch, x: xs.to_vec(), h1, h2, merged, squashed, controls }
    }

    /// Adds the parameter gradient for output sensitivities `d_u`
    /// (`batch x m`) into `grad`.
    pub fn backward(&self, tape: &ActorTape, d_u: &[f64], grad: &mut [f64]) {
        let m = self.output_dim();
        assert_eq!(d_u.len(), tape.batch * m);
        let dz: Vec<f64> = d_u
            .iter()
            .zip(&tape.squashed)
            .enumerate()
            .map(|(i, (g, s))| g * self.u_max[i % m] * (1.0 - s * s))
            .collect();
        let mut d_merged = self
            .out
            .backward(&self.params, &tape.merged, &dz, tape.batch, grad, true)
            .unwrap();
        let mut d_h2 = d_merged.clone();
        relu_backward(&tape.h2, &mut d_h2);
        let from_l2 = self
            .l2
            .backward(&self.params, &tape.h1, &d_h2, tape.batch, grad, true)
            .unwrap();
        for (d, e) in d_merged.iter_mut().zip(&from_l2) {
            *d += e;
        }
        relu_backward(&tape.h1, &mut d_merged);
        self.l1.backward(&self.params, &tape.x, &d_merged, tape.batch, grad, false);
    }
}
