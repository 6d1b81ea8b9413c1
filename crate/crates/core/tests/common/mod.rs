#![allow(dead_code)]

use cacto_core::nn::CriticNet;
use cacto_core::{Control, ControlProblem, Derivatives, EnvModel, State, TerminalDerivatives};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `x' = A x + B u`, `l = x'Qx/2 + u'Ru/2`, `l_T = x'Qf x/2`, unbounded
/// controls.
pub struct LinearQuadratic {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub qf: DMatrix<f64>,
    pub horizon: usize,
    pub bounds: Vec<f64>,
}

fn spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(n, n) * 0.1
}

impl LinearQuadratic {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=3);
        let horizon = rng.random_range(1..=50);
        let a = DMatrix::identity(n, n) * 0.95
            + DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.15..0.15) / n as f64);
        let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        LinearQuadratic { a, b, q: spd(n, rng), r: spd(m, rng), qf: spd(n, rng), horizon, bounds: vec![f64::INFINITY; m] }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Optimal cost from `x` at time 0 by the backward Riccati recursion.
    pub fn riccati_cost(&self, x: &[f64]) -> f64 {
        let mut p = self.qf.clone();
        for _ in 0..self.horizon {
            let bt_p = self.b.transpose() * &p;
            let k = (&self.r + &bt_p * &self.b).lu().solve(&(&bt_p * &self.a)).unwrap();
            let at_p = self.a.transpose() * &p;
            p = &self.q + &at_p * &self.a - &at_p * &self.b * k;
            p = (&p + p.transpose()) * 0.5;
        }
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(p * &x))
    }
}

impl ControlProblem for LinearQuadratic {
    fn state_dim(&self) -> usize {
        self.n() + 1
    }
    fn control_dim(&self) -> usize {
        self.b.ncols()
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn control_bounds(&self) -> &[f64] {
        &self.bounds
    }
    fn step(&self, x: &State, u: &Control) -> State {
        let xn = &self.a * DVector::from_column_slice(x.physical()) + &self.b * DVector::from_column_slice(u);
        State::from_parts(xn.as_slice(), x.time() + 1)
    }
    fn running_cost(&self, x: &State, u: &Control) -> f64 {
        let xv = DVector::from_column_slice(x.physical());
        let uv = DVector::from_column_slice(u);
        0.5 * xv.dot(&(&self.q * &xv)) + 0.5 * uv.dot(&(&self.r * &uv))
    }
    fn terminal_cost(&self, x: &State) -> f64 {
        let xv = DVector::from_column_slice(x.physical());
        0.5 * xv.dot(&(&self.qf * &xv))
    }
    fn derivatives(&self, x: &State, u: &Control) -> Derivatives {
        let xv = DVector::from_column_slice(x.physical());
        let uv = DVector::from_column_slice(u);
        Derivatives {
            f_x: self.a.clone(),
            f_u: self.b.clone(),
            l_x: &self.q * xv,
            l_u: &self.r * uv,
            l_xx: self.q.clone(),
            l_uu: self.r.clone(),
            l_ux: DMatrix::zeros(self.b.ncols(), self.n()),
        }
    }
    fn terminal_derivatives(&self, x: &State) -> TerminalDerivatives {
        TerminalDerivatives { l_x: &self.qf * DVector::from_column_slice(x.physical()), l_xx: self.qf.clone() }
    }
}

pub fn random_state(env: &EnvModel, rng: &mut ChaCha8Rng) -> State {
    let b = &env.state_bounds;
    let phys: Vec<f64> = (0..b.dim()).map(|i| rng.random_range(b.lower[i]..b.upper[i])).collect();
    State::from_parts(&phys, rng.random_range(0..env.horizon))
}

pub fn random_control(env: &EnvModel, rng: &mut ChaCha8Rng) -> Control {
    Control(env.u_max.iter().map(|&b| rng.random_range(-b..b)).collect())
}

/// Relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Five-point central difference of `f` along coordinate `i` of `x`.
pub fn central_diff(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    let mut at = |d: f64| {
        x[i] = orig + d;
        f(x)
    };
    let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
    x[i] = orig;
    (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
}

/// Five-point central difference of a vector-valued function of a scalar
/// offset.
pub fn central_diff_vec(h: f64, mut f: impl FnMut(f64) -> Vec<f64>) -> Vec<f64> {
    let (p1, m1, p2, m2) = (f(h), f(-h), f(2.0 * h), f(-2.0 * h));
    (0..p1.len()).map(|k| (8.0 * (p1[k] - m1[k]) - (p2[k] - m2[k])) / (12.0 * h)).collect()
}

/// Independent layer-by-layer critic evaluation.
pub fn critic_oracle(net: &CriticNet, x: &[f64]) -> f64 {
    let mut h = x.to_vec();
    let layers = net.layers();
    for (k, l) in layers.iter().enumerate() {
        let w = &net.params[l.offset..l.offset + l.output * l.input];
        let b = &net.params[l.offset + l.output * l.input..l.end()];
        let mut out = vec![0.0; l.output];
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = b[j];
            for (i, hi) in h.iter().enumerate() {
                acc += w[j * l.input + i] * hi;
            }
            *o = if k + 1 < layers.len() { acc.max(0.0) } else { acc };
        }
        h = out;
    }
    h[0] * net.output_scale
}
