//! Critic and actor networks with hand-written reverse-mode gradients, Adam,
//! input normalisation, target-network updates and checkpoints.

mod actor;
mod checkpoint;
mod critic;
mod dense;
mod normalizer;

pub use actor::{ActorNet, ActorTape, ACTOR_HIDDEN};
pub use checkpoint::{load_actor, load_critic, save_actor, save_critic};
pub use critic::{CriticNet, CriticTape, CRITIC_HIDDEN};
pub use normalizer::Normalizer;

use crate::dyncore::{Control, ControlProblem, State};
use crate::{Error, Result};

/// Default weight of the squared-norm penalty on all parameters.
pub const L2_WEIGHT: f64 = 1e-2;

pub fn l2_penalty(params: &[f64], weight: f64) -> f64 {
    weight * params.iter().map(|p| p * p).sum::<f64>()
}

pub fn add_l2_grad(params: &[f64], weight: f64, grad: &mut [f64]) {
    if weight != 0.0 {
        for (g, p) in grad.iter_mut().zip(params) {
            *g += 2.0 * weight * p;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    /// One bias-corrected update of `params` along `grads`.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension { what: "adam parameters", expected: self.m.len(), got: params.len().min(grads.len()) });
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// `target <- tau * online + (1 - tau) * target`.
pub fn soft_update(target: &mut [f64], online: &[f64], tau: f64) -> Result<()> {
    if target.len() != online.len() {
        return Err(Error::Dimension { what: "target network", expected: online.len(), got: target.len() });
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("soft update rate must lie in [0, 1], got {tau}")));
    }
    for (t, o) in target.iter_mut().zip(online) {
        *t = tau * o + (1.0 - tau) * *t;
    }
    Ok(())
}

/// Mean over `states` of `Q(x, mu(x)) = l(x, mu(x)) + V(f(x, mu(x)))` and its
/// gradient with respect to the actor parameters (plus the L2 term).
///
/// Successors that reach the horizon are valued with the terminal cost
/// instead of the critic.
pub fn actor_loss_and_grad<P: ControlProblem + ?Sized>(
    actor: &ActorNet,
    critic: &CriticNet,
    problem: &P,
    normalizer: &Normalizer,
    states: &[State],
    l2: f64,
) -> Result<(f64, Vec<f64>)> {
    let batch = states.len();
    if batch == 0 {
        return Err(Error::EmptyBatch("actor update"));
    }
    let n = problem.state_dim();
    let m = problem.control_dim();
    actor.check_input(n)?;
    critic.check_input(n)?;
    if actor.output_dim() != m {
        return Err(Error::Dimension { what: "actor output", expected: m, got: actor.output_dim() });
    }
    let horizon = problem.horizon();

    let mut inputs = vec![0.0; batch * n];
    for (x, row) in states.iter().zip(inputs.chunks_exact_mut(n)) {
        normalizer.normalize_into(x, row);
    }
    let tape = actor.forward_batch(&inputs, batch);
    let controls: Vec<Control> = tape.controls().chunks_exact(m).map(|u| Control(u.to_vec())).collect();

    let mut total = 0.0;
    // dQ/dx' for every row, physical components only
    let mut dnext: Vec<Vec<f64>> = vec![Vec::new(); batch];
    let mut bootstrap_rows = Vec::new();
    let mut next_inputs = Vec::new();
    let mut nexts = Vec::with_capacity(batch);
    for (i, (x, u)) in states.iter().zip(&controls).enumerate() {
        total += problem.running_cost(x, u);
        let next = problem.step(x, u);
        if next.time() >= horizon {
            total += problem.terminal_cost(&next);
            dnext[i] = problem.terminal_derivatives(&next).l_x.iter().copied().collect();
        } else {
            bootstrap_rows.push(i);
            let start = next_inputs.len();
            next_inputs.resize(start + n, 0.0);
            normalizer.normalize_into(&next, &mut next_inputs[start..]);
        }
        nexts.push(next);
    }
    if !bootstrap_rows.is_empty() {
        let ctape = critic.forward_batch(&next_inputs, bootstrap_rows.len());
        total += ctape.values().iter().sum::<f64>();
        let mut scratch = vec![0.0; critic.param_count()];
        let ones = vec![1.0; bootstrap_rows.len()];
        let dz = critic.backward(&ctape, &ones, &mut scratch, true).unwrap();
        for (k, &i) in bootstrap_rows.iter().enumerate() {
            dnext[i] = (0..n - 1).map(|j| dz[k * n + j] * normalizer.input_scale(j)).collect();
        }
    }

    let mut d_u = vec![0.0; batch * m];
    for (i, (x, u)) in states.iter().zip(&controls).enumerate() {
        let d = problem.derivatives(x, u);
        let dv = nalgebra::DVector::from_column_slice(&dnext[i]);
        let q_u = &d.l_u + d.f_u.transpose() * dv;
        for j in 0..m {
            d_u[i * m + j] = q_u[j] / batch as f64;
        }
    }
    let mut grad = vec![0.0; actor.param_count()];
    actor.backward(&tape, &d_u, &mut grad);
    add_l2_grad(&actor.params, l2, &mut grad);
    Ok((total / batch as f64, grad))
}
