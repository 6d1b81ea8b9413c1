//! States, controls and trajectories of a finite-horizon optimal control
//! problem, plus the rollout and cost-accumulation utilities built on them.
//!
//! The time index is carried as the last component of every state vector and
//! is advanced by exactly one per step. Derivatives never include the time
//! row or column.

use std::ops::{Deref, DerefMut};

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// State vector whose last component is the integer-valued time index.
#[derive(Debug, Clone, PartialEq)]
pub struct State(pub Vec<f64>);

impl State {
    pub fn new(values: Vec<f64>) -> Self {
        State(values)
    }

    /// Builds a state from its physical components and a time index.
    pub fn from_parts(physical: &[f64], time: usize) -> Self {
        let mut v = Vec::with_capacity(physical.len() + 1);
        v.extend_from_slice(physical);
        v.push(time as f64);
        State(v)
    }

    pub fn time(&self) -> usize {
        *self.0.last().expect("state has a time component") as usize
    }

    pub fn time_f64(&self) -> f64 {
        *self.0.last().expect("state has a time component")
    }

    /// Components without the trailing time index.
    pub fn physical(&self) -> &[f64] {
        &self.0[..self.0.len() - 1]
    }

    pub fn physical_mut(&mut self) -> &mut [f64] {
        let n = self.0.len();
        &mut self.0[..n - 1]
    }
}

impl Deref for State {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for State {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Control(pub Vec<f64>);

impl Control {
    pub fn zeros(m: usize) -> Self {
        Control(vec![0.0; m])
    }

    /// Componentwise clamp to `[-bound, bound]`.
    pub fn clamped(&self, bounds: &[f64]) -> Control {
        Control(
            self.0
                .iter()
                .zip(bounds)
                .map(|(&u, &b)| u.clamp(-b, b))
                .collect(),
        )
    }
}

impl Deref for Control {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Control {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// First and second order information of dynamics and running cost at one
/// `(x, u)` pair, with the time component excluded.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub f_x: DMatrix<f64>,
    pub f_u: DMatrix<f64>,
    pub l_x: DVector<f64>,
    pub l_u: DVector<f64>,
    pub l_xx: DMatrix<f64>,
    pub l_uu: DMatrix<f64>,
    pub l_ux: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct TerminalDerivatives {
    pub l_x: DVector<f64>,
    pub l_xx: DMatrix<f64>,
}

/// A discrete-time, finite-horizon optimal control problem.
///
/// `state_dim` counts the time component; all derivative blocks use
/// `state_dim() - 1` rows for the state.
pub trait ControlProblem: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    /// Symmetric bounds `|u_i| <= bound_i`; `f64::INFINITY` for unbounded.
    fn control_bounds(&self) -> &[f64];
    /// One step of the dynamics. Time advances by one.
    fn step(&self, x: &State, u: &Control) -> State;
    fn running_cost(&self, x: &State, u: &Control) -> f64;
    fn terminal_cost(&self, x: &State) -> f64;
    fn derivatives(&self, x: &State, u: &Control) -> Derivatives;
    fn terminal_derivatives(&self, x: &State) -> TerminalDerivatives;
}

/// Horizon, step size and control bounds of one problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpSpec {
    pub horizon: usize,
    pub dt: f64,
    pub u_max: Vec<f64>,
}

impl OcpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(b) = self.u_max.iter().find(|b| !(**b > 0.0)) {
            return Err(Error::Config(format!("control bound must be positive, got {b}")));
        }
        Ok(())
    }
}

/// Paired state and control sequences from `start_time` to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub controls: Vec<Control>,
    pub step_costs: Vec<f64>,
    pub terminal_cost: f64,
    pub start_time: usize,
    /// True when `states[k + 1] == step(states[k], controls[k])` for every k.
    pub feasible: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn initial_state(&self) -> &State {
        &self.states[0]
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn total_cost(&self) -> f64 {
        total_cost(self)
    }
}

/// Sum of the stored running costs plus the terminal cost.
pub fn total_cost(traj: &Trajectory) -> f64 {
    traj.step_costs.iter().sum::<f64>() + traj.terminal_cost
}

fn check_initial_state<P: ControlProblem + ?Sized>(problem: &P, x0: &State) -> Result<usize> {
    if x0.len() != problem.state_dim() {
        return Err(Error::Dimension {
            what: "initial state",
            expected: problem.state_dim(),
            got: x0.len(),
        });
    }
    let t = x0.time_f64();
    let horizon = problem.horizon();
    if !(t >= 0.0) || t > horizon as f64 || t.fract() != 0.0 {
        return Err(Error::InvalidTime { time: t, horizon });
    }
    if x0.physical().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: 0 });
    }
    Ok(t as usize)
}

/// Closed-loop rollout of `policy` from `x0` to the horizon. Controls are
/// clamped to the problem bounds before being applied and stored.
pub fn rollout_policy<P, F>(problem: &P, x0: &State, mut policy: F) -> Result<Trajectory>
where
    P: ControlProblem + ?Sized,
    F: FnMut(&State) -> Control,
{
    let t0 = check_initial_state(problem, x0)?;
    let steps = problem.horizon() - t0;
    let bounds = problem.control_bounds();
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps);
    let mut step_costs = Vec::with_capacity(steps);
    states.push(x0.clone());
    for k in 0..steps {
        let x = &states[k];
        let raw = policy(x);
        if raw.len() != problem.control_dim() {
            return Err(Error::Dimension {
                what: "policy output",
                expected: problem.control_dim(),
                got: raw.len(),
            });
        }
        if raw.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite { step: k });
        }
        let u = raw.clamped(bounds);
        let cost = problem.running_cost(x, &u);
        let next = problem.step(x, &u);
        if !cost.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k });
        }
        step_costs.push(cost);
        controls.push(u);
        states.push(next);
    }
    let terminal_cost = problem.terminal_cost(states.last().unwrap());
    if !terminal_cost.is_finite() {
        return Err(Error::NonFinite { step: steps });
    }
    Ok(Trajectory {
        states,
        controls,
        step_costs,
        terminal_cost,
        start_time: t0,
        feasible: true,
    })
}

/// Open-loop rollout of an explicit control sequence, clamped to bounds.
/// The sequence must cover exactly the remaining horizon.
pub fn rollout_controls<P>(problem: &P, x0: &State, controls: &[Control]) -> Result<Trajectory>
where
    P: ControlProblem + ?Sized,
{
    let t0 = check_initial_state(problem, x0)?;
    let steps = problem.horizon() - t0;
    if controls.len() != steps {
        return Err(Error::Dimension {
            what: "control sequence length",
            expected: steps,
            got: controls.len(),
        });
    }
    if let Some(k) = controls.iter().position(|u| u.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite { step: k });
    }
    let mut k = 0;
    rollout_policy(problem, x0, |_| {
        let u = controls[k].clone();
        k += 1;
        u
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{EnvKind, EnvModel};

    #[test]
    fn zero_policy_last_step_keeps_position() {
        let env = EnvModel::default_for(EnvKind::DoubleIntegrator);
        let t = env.horizon() - 1;
        let x0 = State::from_parts(&[0.0, 0.0, 0.0, 0.0], t);
        let traj = rollout_policy(&env, &x0, |_| Control::zeros(2)).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(&traj.states[1][..4], &[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(traj.states[1].time(), env.horizon());
    }

    #[test]
    fn single_integrator_constant_policy() {
        let mut env = EnvModel::default_for(EnvKind::SingleIntegrator);
        env.dt = 0.05;
        let x0 = State::from_parts(&[0.0, 0.0], env.horizon() - 2);
        let traj = rollout_policy(&env, &x0, |_| Control(vec![1.0, 0.0])).unwrap();
        let xs: Vec<f64> = traj.states.iter().map(|s| s[0]).collect();
        assert_eq!(xs.len(), 3);
        assert!((xs[0] - 0.0).abs() < 1e-15);
        assert!((xs[1] - 0.05).abs() < 1e-15);
        assert!((xs[2] - 0.10).abs() < 1e-15);
    }

    #[test]
    fn policy_output_is_clamped() {
        let env = EnvModel::default_for(EnvKind::SingleIntegrator);
        let x0 = State::from_parts(&[0.0, 0.0], env.horizon() - 3);
        let traj = rollout_policy(&env, &x0, |_| Control(vec![100.0, -100.0])).unwrap();
        for u in &traj.controls {
            assert_eq!(u.0, vec![env.u_max[0], -env.u_max[1]]);
        }
    }

    #[test]
    fn empty_horizon_has_only_terminal_cost() {
        let env = EnvModel::default_for(EnvKind::DoubleIntegrator);
        let x0 = State::from_parts(&[1.0, 2.0, 0.0, 0.0], env.horizon());
        let traj = rollout_controls(&env, &x0, &[]).unwrap();
        assert!(traj.is_empty());
        assert_eq!(traj.states.len(), 1);
        assert_eq!(total_cost(&traj), env.terminal_cost(&x0));
    }

    #[test]
    fn double_integrator_coasting() {
        let mut env = EnvModel::default_for(EnvKind::DoubleIntegrator);
        env.dt = 0.05;
        let x0 = State::from_parts(&[0.0, 0.0, 1.0, 0.0], env.horizon() - 3);
        let traj = rollout_controls(&env, &x0, &vec![Control::zeros(2); 3]).unwrap();
        let xs: Vec<f64> = traj.states.iter().map(|s| s[0]).collect();
        for (got, want) in xs.iter().zip([0.0, 0.05, 0.10, 0.15]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn nan_control_reports_step() {
        let env = EnvModel::default_for(EnvKind::DoubleIntegrator);
        let x0 = State::from_parts(&[0.0; 4], env.horizon() - 3);
        let controls = vec![
            Control::zeros(2),
            Control(vec![f64::NAN, 0.0]),
            Control::zeros(2),
        ];
        match rollout_controls(&env, &x0, &controls) {
            Err(Error::NonFinite { step }) => assert_eq!(step, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let env = EnvModel::default_for(EnvKind::DoubleIntegrator);
        let x0 = State::from_parts(&[0.0; 3], 0);
        assert!(matches!(
            rollout_policy(&env, &x0, |_| Control::zeros(2)),
            Err(Error::Dimension { .. })
        ));
        let x0 = State::from_parts(&[0.0; 4], 0);
        assert!(matches!(
            rollout_policy(&env, &x0, |_| Control::zeros(3)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn total_cost_sums() {
        let traj = Trajectory {
            states: vec![State::from_parts(&[0.0], 0)],
            controls: vec![],
            step_costs: vec![],
            terminal_cost: 3.0,
            start_time: 0,
            feasible: true,
        };
        assert_eq!(total_cost(&traj), 3.0);
        let traj = Trajectory {
            step_costs: vec![1.0, 2.0, 3.0],
            terminal_cost: 4.0,
            ..traj
        };
        assert_eq!(total_cost(&traj), 10.0);
    }

    #[test]
    fn ocp_spec_validation() {
        let ok = OcpSpec { horizon: 10, dt: 0.05, u_max: vec![1.0, 2.0] };
        assert!(ok.validate().is_ok());
        assert!(OcpSpec { horizon: 0, ..ok.clone() }.validate().is_err());
        assert!(OcpSpec { dt: 0.0, ..ok.clone() }.validate().is_err());
        assert!(OcpSpec { u_max: vec![1.0, 0.0], ..ok }.validate().is_err());
    }
}
