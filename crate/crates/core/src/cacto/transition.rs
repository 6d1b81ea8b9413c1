use serde::{Deserialize, Serialize};

use crate::dyncore::{Control, State, Trajectory};
use crate::nn::{CriticNet, Normalizer};
use crate::{Error, Result};

/// Number of running costs summed before bootstrapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LookaheadRepr", into = "LookaheadRepr")]
pub enum Lookahead {
    /// Sum to the end of the episode (`L = T - 1 - t`).
    MonteCarlo,
    /// `L` additional steps after `t`.
    Steps(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LookaheadRepr {
    Steps(usize),
    Named(String),
}

impl TryFrom<LookaheadRepr> for Lookahead {
    type Error = String;
    fn try_from(r: LookaheadRepr) -> Result<Self, String> {
        match r {
            LookaheadRepr::Steps(l) => Ok(Lookahead::Steps(l)),
            LookaheadRepr::Named(s) if s == "monte-carlo" => Ok(Lookahead::MonteCarlo),
            LookaheadRepr::Named(s) => Err(format!("lookahead must be a step count or \"monte-carlo\", got \"{s}\"")),
        }
    }
}

impl From<Lookahead> for LookaheadRepr {
    fn from(l: Lookahead) -> Self {
        match l {
            Lookahead::MonteCarlo => LookaheadRepr::Named("monte-carlo".into()),
            Lookahead::Steps(l) => LookaheadRepr::Steps(l),
        }
    }
}

impl Lookahead {
    /// Concrete `L` at time `t` for horizon `T`.
    pub fn steps_at(self, t: usize, horizon: usize) -> usize {
        match self {
            Lookahead::MonteCarlo => horizon.saturating_sub(t + 1),
            Lookahead::Steps(l) => l,
        }
    }
}

/// Replay record of one visited state.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: State,
    pub control: Control,
    /// Sum of running costs from `t` through `min(t + L, T - 1)`.
    pub partial_ctg: f64,
    /// State `x_{min(t + L + 1, T)}`.
    pub bootstrap: State,
    /// True when the window reaches the end of the episode, so the
    /// bootstrap state is the final one.
    pub terminal: bool,
    /// Terminal cost of the bootstrap state when `terminal`, else 0.
    pub terminal_cost: f64,
}

/// `sum_{j = t}^{min(t + L, end - 1)} costs[j]`.
pub fn partial_cost_to_go(costs: &[f64], t: usize, lookahead: usize, end: usize) -> Result<f64> {
    if end > costs.len() {
        return Err(Error::IndexOutOfRange { index: end, len: costs.len() });
    }
    if t >= end {
        return Err(Error::IndexOutOfRange { index: t, len: end });
    }
    let last = t.saturating_add(lookahead).min(end - 1);
    Ok(costs[t..=last].iter().sum())
}

/// One transition per step of an episode trajectory.
pub fn episode_transitions(traj: &Trajectory, lookahead: Lookahead, horizon: usize) -> Result<Vec<Transition>> {
    let len = traj.len();
    (0..len)
        .map(|k| {
            let l = lookahead.steps_at(traj.start_time + k, horizon);
            let partial_ctg = partial_cost_to_go(&traj.step_costs, k, l, len)?;
            let b = k.saturating_add(l).saturating_add(1).min(len);
            let terminal = b == len;
            Ok(Transition {
                state: traj.states[k].clone(),
                control: traj.controls[k].clone(),
                partial_ctg,
                bootstrap: traj.states[b].clone(),
                terminal,
                terminal_cost: if terminal { traj.terminal_cost } else { 0.0 },
            })
        })
        .collect()
}

/// Regression target: the partial cost-to-go plus the terminal cost when the
/// window reaches the end of the episode, or plus the target critic's value
/// of the bootstrap state otherwise.
pub fn compute_target(transition: &Transition, target_critic: &CriticNet, normalizer: &Normalizer) -> f64 {
    if transition.terminal {
        transition.partial_ctg + transition.terminal_cost
    } else {
        transition.partial_ctg + target_critic.forward(&normalizer.normalize(&transition.bootstrap))
    }
}

/// Targets for a batch, evaluating the target critic once.
pub fn compute_targets(batch: &[&Transition], target_critic: &CriticNet, normalizer: &Normalizer) -> Vec<f64> {
    let n = normalizer.dim();
    let rows: Vec<usize> = (0..batch.len()).filter(|&i| !batch[i].terminal).collect();
    let mut inputs = vec![0.0; rows.len() * n];
    for (k, &i) in rows.iter().enumerate() {
        normalizer.normalize_into(&batch[i].bootstrap, &mut inputs[k * n..(k + 1) * n]);
    }
    let mut out: Vec<f64> = batch.iter().map(|t| t.partial_ctg + t.terminal_cost).collect();
    if !rows.is_empty() {
        let tape = target_critic.forward_batch(&inputs, rows.len());
        for (k, &i) in rows.iter().enumerate() {
            out[i] += tape.values()[k];
        }
    }
    out
}
