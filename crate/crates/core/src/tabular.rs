//! Lookup-table version of the algorithm on finite deterministic MDPs:
//! policy evaluation, a discrete local search standing in for trajectory
//! optimisation, greedy improvement, and the value-iteration optimum it is
//! checked against.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;

use crate::seeds::indexed_rng;

/// Finite deterministic MDP with time-invariant running cost.
///
/// Tables are indexed by `state * n_controls + control`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMdp {
    pub n_states: usize,
    pub n_controls: usize,
    pub horizon: usize,
    pub next: Vec<usize>,
    pub cost: Vec<f64>,
    pub terminal: Vec<f64>,
}

/// Controls of the grid constructor: stay, +x, -x, +y, -y.
pub const GRID_MOVES: [(i64, i64); 5] = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)];

/// Description of a 2-D grid world.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    pub width: usize,
    pub height: usize,
    pub horizon: usize,
    pub goal: (usize, usize),
    /// Cost of every step taken outside the goal.
    pub step_cost: f64,
    /// Extra cost of any move other than staying.
    pub move_cost: f64,
    /// Extra per-cell cost (obstacles), row-major `y * width + x`.
    pub cell_cost: Vec<f64>,
    /// Terminal cost per unit Manhattan distance to the goal.
    pub terminal_weight: f64,
}

impl GridWorld {
    pub fn open(width: usize, height: usize, horizon: usize, goal: (usize, usize)) -> Self {
        GridWorld {
            width,
            height,
            horizon,
            goal,
            step_cost: 1.0,
            move_cost: 0.0,
            cell_cost: vec![0.0; width * height],
            terminal_weight: 0.0,
        }
    }

    pub fn cell(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Moves off the grid leave the state unchanged.
    pub fn build(&self) -> GridMdp {
        let n = self.width * self.height;
        let m = GRID_MOVES.len();
        let goal = self.cell(self.goal.0, self.goal.1);
        let mut next = vec![0; n * m];
        let mut cost = vec![0.0; n * m];
        let mut terminal = vec![0.0; n];
        for y in 0..self.height {
            for x in 0..self.width {
                let s = self.cell(x, y);
                for (u, (dx, dy)) in GRID_MOVES.iter().enumerate() {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    let inside = nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height;
                    next[s * m + u] = if inside { self.cell(nx as usize, ny as usize) } else { s };
                    let mut c = self.cell_cost[s];
                    if s != goal {
                        c += self.step_cost;
                    }
                    if u != 0 {
                        c += self.move_cost;
                    }
                    cost[s * m + u] = c;
                }
                let d = x.abs_diff(self.goal.0) + y.abs_diff(self.goal.1);
                terminal[s] = self.terminal_weight * d as f64 + self.cell_cost[s];
            }
        }
        GridMdp { n_states: n, n_controls: m, horizon: self.horizon, next, cost, terminal }
    }

    /// Random instance: a few obstacle walls with large real-valued costs,
    /// small random per-cell costs, goal on the far side.
    pub fn random(width: usize, height: usize, horizon: usize, rng: &mut impl Rng) -> Self {
        let goal = (rng.random_range(0..width), rng.random_range(0..height));
        let mut w = GridWorld::open(width, height, horizon, goal);
        w.move_cost = rng.random_range(0.0..0.2);
        w.terminal_weight = rng.random_range(0.5..3.0);
        for c in &mut w.cell_cost {
            *c = rng.random_range(0.0..0.5);
        }
        let walls = 1 + width.min(height) / 4;
        for _ in 0..walls {
            let vertical = rng.random_bool(0.5);
            let len = rng.random_range(2..=width.max(height) / 2 + 1);
            let (mut x, mut y) = (rng.random_range(0..width), rng.random_range(0..height));
            let penalty = rng.random_range(20.0..60.0);
            for _ in 0..len {
                if (x, y) != goal {
                    let i = w.cell(x, y);
                    w.cell_cost[i] += penalty;
                }
                if vertical {
                    y = (y + 1).min(height - 1);
                } else {
                    x = (x + 1).min(width - 1);
                }
            }
        }
        w
    }
}

impl GridMdp {
    fn idx(&self, s: usize, u: usize) -> usize {
        s * self.n_controls + u
    }

    pub fn step(&self, s: usize, u: usize) -> usize {
        self.next[self.idx(s, u)]
    }

    pub fn running_cost(&self, s: usize, u: usize) -> f64 {
        self.cost[self.idx(s, u)]
    }

    pub fn validate(&self) -> bool {
        let n = self.n_states * self.n_controls;
        self.next.len() == n
            && self.cost.len() == n
            && self.terminal.len() == self.n_states
            && self.next.iter().all(|&s| s < self.n_states)
            && self.cost.iter().chain(&self.terminal).all(|c| c.is_finite())
    }
}

/// Value table indexed by `t * n_states + s` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularValue {
    pub n_states: usize,
    pub values: Vec<f64>,
}

impl TabularValue {
    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.values[t * self.n_states + s]
    }

    pub fn max_abs_diff(&self, other: &TabularValue) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// True when every entry of `self` is at most the matching entry of
    /// `other` plus `tol`.
    pub fn le(&self, other: &TabularValue, tol: f64) -> bool {
        self.values.iter().zip(&other.values).all(|(a, b)| *a <= b + tol)
    }
}

/// Policy table indexed by `t * n_states + s` for `t = 0..T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabularPolicy {
    pub n_states: usize,
    pub actions: Vec<usize>,
}

impl TabularPolicy {
    pub fn get(&self, s: usize, t: usize) -> usize {
        self.actions[t * self.n_states + s]
    }

    pub fn constant(mdp: &GridMdp, u: usize) -> Self {
        TabularPolicy { n_states: mdp.n_states, actions: vec![u; mdp.n_states * mdp.horizon] }
    }

    pub fn random(mdp: &GridMdp, rng: &mut impl Rng) -> Self {
        let actions = (0..mdp.n_states * mdp.horizon).map(|_| rng.random_range(0..mdp.n_controls)).collect();
        TabularPolicy { n_states: mdp.n_states, actions }
    }
}

/// Exact backward dynamic programming.
pub fn value_iteration(mdp: &GridMdp) -> TabularValue {
    let n = mdp.n_states;
    let mut values = vec![0.0; n * (mdp.horizon + 1)];
    values[mdp.horizon * n..].copy_from_slice(&mdp.terminal);
    for t in (0..mdp.horizon).rev() {
        for s in 0..n {
            let best = (0..mdp.n_controls)
                .map(|u| mdp.running_cost(s, u) + values[(t + 1) * n + mdp.step(s, u)])
                .fold(f64::INFINITY, f64::min);
            values[t * n + s] = best;
        }
    }
    TabularValue { n_states: n, values }
}

/// Exact cost-to-go of `policy`.
pub fn policy_evaluation(mdp: &GridMdp, policy: &TabularPolicy) -> TabularValue {
    let n = mdp.n_states;
    let mut values = vec![0.0; n * (mdp.horizon + 1)];
    values[mdp.horizon * n..].copy_from_slice(&mdp.terminal);
    for t in (0..mdp.horizon).rev() {
        for s in 0..n {
            let u = policy.get(s, t);
            values[t * n + s] = mdp.running_cost(s, u) + values[(t + 1) * n + mdp.step(s, u)];
        }
    }
    TabularValue { n_states: n, values }
}

/// `argmin_u l(s, u) + V_{t+1}(f(s, u))`, ties broken towards the lowest
/// control index.
pub fn greedy_policy(mdp: &GridMdp, value: &TabularValue) -> TabularPolicy {
    let n = mdp.n_states;
    let mut actions = vec![0; n * mdp.horizon];
    for t in 0..mdp.horizon {
        for s in 0..n {
            let mut best = (0, f64::INFINITY);
            for u in 0..mdp.n_controls {
                let q = mdp.running_cost(s, u) + value.get(mdp.step(s, u), t + 1);
                if q < best.1 {
                    best = (u, q);
                }
            }
            actions[t * n + s] = best.0;
        }
    }
    TabularPolicy { n_states: n, actions }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTrajectory {
    pub start_state: usize,
    pub start_time: usize,
    pub controls: Vec<usize>,
}

impl DiscreteTrajectory {
    pub fn states(&self, mdp: &GridMdp) -> Vec<usize> {
        let mut s = vec![self.start_state];
        for &u in &self.controls {
            s.push(mdp.step(*s.last().unwrap(), u));
        }
        s
    }

    /// Running costs plus terminal cost of the final state.
    pub fn cost(&self, mdp: &GridMdp) -> f64 {
        let mut s = self.start_state;
        let mut total = 0.0;
        for &u in &self.controls {
            total += mdp.running_cost(s, u);
            s = mdp.step(s, u);
        }
        total + mdp.terminal[s]
    }
}

pub fn rollout(mdp: &GridMdp, policy: &TabularPolicy, s: usize, t: usize) -> DiscreteTrajectory {
    let mut state = s;
    let controls = (t..mdp.horizon)
        .map(|k| {
            let u = policy.get(state, k);
            state = mdp.step(state, u);
            u
        })
        .collect();
    DiscreteTrajectory { start_state: s, start_time: t, controls }
}

/// Discrete trajectory optimiser: must return a trajectory from the same
/// start whose cost is not above the guess's.
pub trait LocalSearch: Sync {
    fn improve(&self, mdp: &GridMdp, guess: &DiscreteTrajectory) -> DiscreteTrajectory;
}

/// Repeated sweeps over time steps, replacing one control at a time by the
/// best single-step deviation while the total cost strictly decreases.
#[derive(Debug, Clone, Copy, Default)]
pub struct CoordinateDescent;

impl LocalSearch for CoordinateDescent {
    fn improve(&self, mdp: &GridMdp, guess: &DiscreteTrajectory) -> DiscreteTrajectory {
        discrete_to_solve(mdp, guess)
    }
}

pub fn discrete_to_solve(mdp: &GridMdp, guess: &DiscreteTrajectory) -> DiscreteTrajectory {
    let len = guess.controls.len();
    let mut controls = guess.controls.clone();
    // states[k] and prefix[k] (cost of steps before k) along `controls`
    let mut states = vec![guess.start_state; len + 1];
    let mut prefix = vec![0.0; len + 1];
    let refresh = |controls: &[usize], states: &mut [usize], prefix: &mut [f64], from: usize| {
        for k in from..len {
            prefix[k + 1] = prefix[k] + mdp.running_cost(states[k], controls[k]);
            states[k + 1] = mdp.step(states[k], controls[k]);
        }
    };
    refresh(&controls, &mut states, &mut prefix, 0);
    let mut best_cost = prefix[len] + mdp.terminal[states[len]];
    loop {
        let mut improved = false;
        for k in 0..len {
            for u in 0..mdp.n_controls {
                if u == controls[k] {
                    continue;
                }
                let mut c = prefix[k] + mdp.running_cost(states[k], u);
                let mut s = mdp.step(states[k], u);
                for &v in &controls[k + 1..] {
                    c += mdp.running_cost(s, v);
                    s = mdp.step(s, v);
                }
                c += mdp.terminal[s];
                if c < best_cost {
                    controls[k] = u;
                    best_cost = c;
                    improved = true;
                    refresh(&controls, &mut states, &mut prefix, k);
                }
            }
        }
        if !improved {
            return DiscreteTrajectory { controls, ..guess.clone() };
        }
    }
}

#[derive(Debug, Clone)]
pub struct TabularOutcome {
    pub value: TabularValue,
    pub policy: TabularPolicy,
    /// Value of the optimiser-derived policy at every iteration.
    pub trace: Vec<TabularValue>,
    /// True when every trace entry is pointwise no larger than its
    /// predecessor.
    pub monotone: bool,
}

/// Policy derived from local-search solutions.
///
/// Built backwards in time: at `(s, t)` the first control of the optimised
/// rollout of `policy` is kept when its one-step lookahead under the
/// partially built policy is no worse than `policy(s, t)`'s; otherwise
/// `policy(s, t)` is kept. Returns the policy and its exact value.
pub fn optimized_policy(
    mdp: &GridMdp,
    policy: &TabularPolicy,
    search: &dyn LocalSearch,
) -> (TabularPolicy, TabularValue) {
    let n = mdp.n_states;
    let mut actions = vec![0; n * mdp.horizon];
    let mut values = vec![0.0; n * (mdp.horizon + 1)];
    values[mdp.horizon * n..].copy_from_slice(&mdp.terminal);
    for t in (0..mdp.horizon).rev() {
        for s in 0..n {
            let solved = search.improve(mdp, &rollout(mdp, policy, s, t));
            let q = |u: usize| mdp.running_cost(s, u) + values[(t + 1) * n + mdp.step(s, u)];
            let u_to = solved.controls[0];
            let u_pi = policy.get(s, t);
            let (u, v) = if q(u_to) <= q(u_pi) { (u_to, q(u_to)) } else { (u_pi, q(u_pi)) };
            actions[t * n + s] = u;
            values[t * n + s] = v;
        }
    }
    (TabularPolicy { n_states: n, actions }, TabularValue { n_states: n, values })
}

/// Alternates optimiser-derived policies, exact evaluation and greedy
/// improvement until the value stops changing.
pub fn tabular_cacto(mdp: &GridMdp, initial: &TabularPolicy, search: &dyn LocalSearch) -> TabularOutcome {
    let mut policy = initial.clone();
    let mut trace: Vec<TabularValue> = Vec::new();
    let mut monotone = true;
    let max_iterations = mdp.n_states * mdp.horizon + 2;
    loop {
        let (to_policy, _) = optimized_policy(mdp, &policy, search);
        let value = policy_evaluation(mdp, &to_policy);
        if let Some(prev) = trace.last() {
            monotone &= value.le(prev, 0.0);
            if value == *prev || trace.len() >= max_iterations {
                return TabularOutcome { value, policy: to_policy, trace, monotone };
            }
        }
        policy = greedy_policy(mdp, &value);
        trace.push(value);
    }
}

/// Grid instances used for verification: sizes from 4x4 up to 16x16,
/// horizons up to 30, with obstacle walls.
pub fn verification_suite(seed: u64) -> Vec<GridMdp> {
    [(4, 4, 8), (6, 5, 12), (8, 8, 20), (10, 12, 24), (16, 16, 30)]
        .iter()
        .enumerate()
        .map(|(i, &(w, h, t))| GridWorld::random(w, h, t, &mut indexed_rng(seed, i as u64)).build())
        .collect()
}

/// Result of checking one MDP from several random initial policies.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRecord {
    pub mdp: usize,
    pub start: usize,
    pub iterations: usize,
    /// `max |V_k - V*|` for every trace entry.
    pub trace_errors: Vec<f64>,
    pub max_error: f64,
    pub monotone: bool,
    /// Local-search calls that returned a start other than the guess's or a
    /// cost above it.
    pub contract_violations: usize,
}

impl VerifyRecord {
    pub fn passed(&self, tol: f64) -> bool {
        self.monotone && self.contract_violations == 0 && self.max_error <= tol
    }
}

struct Checked<'a> {
    inner: &'a dyn LocalSearch,
    violations: AtomicUsize,
}

impl LocalSearch for Checked<'_> {
    fn improve(&self, mdp: &GridMdp, guess: &DiscreteTrajectory) -> DiscreteTrajectory {
        let out = self.inner.improve(mdp, guess);
        let same_start = out.start_state == guess.start_state
            && out.start_time == guess.start_time
            && out.controls.len() == guess.controls.len()
            && !out.controls.is_empty()
            && out.controls.iter().all(|&u| u < mdp.n_controls);
        if !same_start || out.cost(mdp) > guess.cost(mdp) {
            self.violations.fetch_add(1, Ordering::Relaxed);
            return guess.clone();
        }
        out
    }
}

pub fn verify(mdps: &[GridMdp], starts: usize, seed: u64, search: &dyn LocalSearch) -> Vec<VerifyRecord> {
    let mut out = Vec::new();
    for (i, mdp) in mdps.iter().enumerate() {
        let optimum = value_iteration(mdp);
        let mut rng = indexed_rng(seed ^ 0x7ab1, i as u64);
        for start in 0..starts {
            let pi0 = TabularPolicy::random(mdp, &mut rng);
            let checked = Checked { inner: search, violations: AtomicUsize::new(0) };
            let res = tabular_cacto(mdp, &pi0, &checked);
            out.push(VerifyRecord {
                mdp: i,
                start,
                iterations: res.trace.len(),
                trace_errors: res.trace.iter().map(|v| v.max_abs_diff(&optimum)).collect(),
                max_error: res.value.max_abs_diff(&optimum),
                monotone: res.monotone,
                contract_violations: checked.violations.into_inner(),
            });
        }
    }
    out
}
