use crate::environments::EnvModel;
use crate::{Error, Result};

/// Affine map of raw states to network inputs: physical components become
/// `(x - offset) / scale`, the time index becomes `t / T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
    pub horizon: usize,
}

impl Normalizer {
    pub fn new(offset: Vec<f64>, scale: Vec<f64>, horizon: usize) -> Result<Self> {
        if offset.len() != scale.len() {
            return Err(Error::Dimension {
                what: "normalizer scale",
                expected: offset.len(),
                got: scale.len(),
            });
        }
        if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) || horizon == 0 {
            return Err(Error::Config("normalizer scales and horizon must be positive".into()));
        }
        Ok(Normalizer { offset, scale, horizon })
    }

    /// Maps the environment's state bounds onto `[-1, 1]`.
    pub fn from_env(env: &EnvModel) -> Self {
        let b = &env.state_bounds;
        let offset = b.lower.iter().zip(&b.upper).map(|(l, u)| 0.5 * (l + u)).collect();
        let scale = b.lower.iter().zip(&b.upper).map(|(l, u)| 0.5 * (u - l)).collect();
        Normalizer { offset, scale, horizon: env.horizon }
    }

    /// Input dimension including time.
    pub fn dim(&self) -> usize {
        self.offset.len() + 1
    }

    pub fn normalize_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.offset.len();
        debug_assert_eq!(x.len(), n + 1);
        for i in 0..n {
            out[i] = (x[i] - self.offset[i]) / self.scale[i];
        }
        out[n] = x[n] / self.horizon as f64;
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.normalize_into(x, &mut out);
        out
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        let n = self.offset.len();
        let mut out: Vec<f64> = (0..n).map(|i| z[i] * self.scale[i] + self.offset[i]).collect();
        out.push(z[n] * self.horizon as f64);
        out
    }

    /// Derivative of normalized component `i` with respect to raw component `i`.
    pub fn input_scale(&self, i: usize) -> f64 {
        if i < self.offset.len() {
            1.0 / self.scale[i]
        } else {
            1.0 / self.horizon as f64
        }
    }
}
