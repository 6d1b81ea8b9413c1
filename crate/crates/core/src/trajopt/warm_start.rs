//! Initial guesses for the trajectory optimizer.

use rand::Rng;

use crate::dyncore::{rollout_policy, Control, ControlProblem, State, Trajectory};
use crate::environments::{EnvKind, EnvModel};
use crate::nn::{ActorNet, Normalizer};
use crate::seeds::indexed_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarmStartKind {
    /// State frozen at `x0`, zero controls.
    InitialConditions,
    /// Uniformly random states and controls.
    Random,
    /// Rollout of the learned actor.
    Policy,
    /// Tracking rollout along a list of waypoints.
    Waypoints,
}

fn assemble<P: ControlProblem + ?Sized>(
    problem: &P,
    states: Vec<State>,
    controls: Vec<Control>,
    start_time: usize,
) -> Trajectory {
    let step_costs: Vec<f64> = states
        .iter()
        .zip(&controls)
        .map(|(x, u)| problem.running_cost(x, u))
        .collect();
    let feasible = states
        .windows(2)
        .zip(&controls)
        .all(|(w, u)| problem.step(&w[0], u) == w[1]);
    let terminal_cost = problem.terminal_cost(states.last().unwrap());
    Trajectory {
        states,
        controls,
        step_costs,
        terminal_cost,
        start_time,
        feasible,
    }
}

/// Initial-condition guess: every state equals `x0` (with time advancing),
/// every control is zero.
pub fn warm_start_ics<P: ControlProblem + ?Sized>(problem: &P, x0: &State) -> Trajectory {
    let t0 = x0.time();
    let steps = problem.horizon().saturating_sub(t0);
    let states = (0..=steps)
        .map(|k| State::from_parts(x0.physical(), t0 + k))
        .collect();
    let controls = vec![Control::zeros(problem.control_dim()); steps];
    assemble(problem, states, controls, t0)
}

/// Random guess: states uniform inside the environment's state bounds
/// (the first state stays `x0`), controls uniform within the bounds.
/// Deterministic in `seed`.
pub fn warm_start_random(env: &EnvModel, x0: &State, seed: u64) -> Trajectory {
    let mut rng = indexed_rng(seed, 0);
    let t0 = x0.time();
    let steps = env.horizon.saturating_sub(t0);
    let b = &env.state_bounds;
    let mut states = vec![x0.clone()];
    for k in 1..=steps {
        let phys: Vec<f64> = (0..b.dim())
            .map(|i| rng.random_range(b.lower[i]..=b.upper[i]))
            .collect();
        states.push(State::from_parts(&phys, t0 + k));
    }
    let controls = (0..steps)
        .map(|_| Control(env.u_max.iter().map(|&m| rng.random_range(-m..=m)).collect()))
        .collect();
    assemble(env, states, controls, t0)
}

/// Closed-loop rollout of the actor from `x0`.
pub fn warm_start_policy(
    env: &EnvModel,
    x0: &State,
    actor: &ActorNet,
    normalizer: &Normalizer,
) -> Result<Trajectory> {
    if actor.input_dim() != env.state_dim() {
        return Err(Error::Dimension {
            what: "actor input",
            expected: env.state_dim(),
            got: actor.input_dim(),
        });
    }
    if actor.output_dim() != env.control_dim() {
        return Err(Error::Dimension {
            what: "actor output",
            expected: env.control_dim(),
            got: actor.output_dim(),
        });
    }
    let mut buf = vec![0.0; env.state_dim()];
    rollout_policy(env, x0, |x| {
        normalizer.normalize_into(x, &mut buf);
        Control(actor.forward(&buf))
    })
}

/// Waypoints leading from inside the C-shaped obstacle around its upper
/// arm to the default target.
pub const DEFAULT_DETOUR: [[f64; 2]; 4] = [[8.0, 0.0], [8.0, 9.0], [-2.0, 9.0], [-7.0, 0.0]];

/// Rollout of a proportional-derivative tracker that visits `waypoints` in
/// order, switching when within `radius` of the current one. Only defined
/// for the point-mass systems.
pub fn warm_start_waypoints(
    env: &EnvModel,
    x0: &State,
    waypoints: &[[f64; 2]],
    radius: f64,
) -> Result<Trajectory> {
    if waypoints.is_empty() {
        return Err(Error::Config("waypoint list is empty".into()));
    }
    let mut current = 0;
    let mut policy = |x: &State| {
        let p = [x[0], x[1]];
        let w = waypoints[current];
        if current + 1 < waypoints.len() && (p[0] - w[0]).hypot(p[1] - w[1]) < radius {
            current += 1;
        }
        let w = waypoints[current];
        match env.kind {
            EnvKind::SingleIntegrator => Control(vec![2.0 * (w[0] - p[0]), 2.0 * (w[1] - p[1])]),
            _ => Control(vec![
                4.0 * (w[0] - p[0]) - 4.0 * x[2],
                4.0 * (w[1] - p[1]) - 4.0 * x[3],
            ]),
        }
    };
    match env.kind {
        EnvKind::SingleIntegrator | EnvKind::DoubleIntegrator => rollout_policy(env, x0, &mut policy),
        other => Err(Error::Config(format!("waypoint warm start is not available for {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::EnvKind;

    #[test]
    fn ics_guess_is_constant_with_zero_controls() {
        let env = EnvModel::default_for(EnvKind::DoubleIntegrator);
        let x0 = State::from_parts(&[3.0, -2.0, 0.5, 0.0], 10);
        let g = warm_start_ics(&env, &x0);
        assert_eq!(g.states.len(), env.horizon - 10 + 1);
        for (k, s) in g.states.iter().enumerate() {
            assert_eq!(s.physical(), x0.physical());
            assert_eq!(s.time(), 10 + k);
        }
        assert!(g.controls.iter().all(|u| u.iter().all(|v| *v == 0.0)));
        // moving start is not an equilibrium
        assert!(!g.feasible);
        let rest = State::from_parts(&[3.0, -2.0, 0.0, 0.0], 10);
        assert!(warm_start_ics(&env, &rest).feasible);
    }

    #[test]
    fn ics_one_step_horizon() {
        let env = EnvModel::default_for(EnvKind::SingleIntegrator);
        let x0 = State::from_parts(&[1.0, 1.0], env.horizon - 1);
        let g = warm_start_ics(&env, &x0);
        assert_eq!(g.len(), 1);
        assert_eq!(g.states[0].physical(), g.states[1].physical());
    }

    #[test]
    fn random_guess_is_seeded_and_bounded() {
        let env = EnvModel::default_for(EnvKind::DubinsCar);
        let x0 = State::from_parts(&[0.0; 5], 0);
        let a = warm_start_random(&env, &x0, 42);
        let b = warm_start_random(&env, &x0, 42);
        let c = warm_start_random(&env, &x0, 43);
        assert_eq!(a, b);
        assert_ne!(a.controls, c.controls);
        let mut n = 0;
        for seed in 0..100 {
            for u in &warm_start_random(&env, &x0, seed).controls {
                for (v, m) in u.iter().zip(&env.u_max) {
                    assert!(v.abs() <= *m);
                    n += 1;
                }
            }
        }
        assert!(n >= 10_000);
    }

    #[test]
    fn waypoints_only_for_point_masses() {
        let env = EnvModel::default_for(EnvKind::DubinsCar);
        let x0 = State::from_parts(&[0.0; 5], 0);
        assert!(warm_start_waypoints(&env, &x0, &DEFAULT_DETOUR, 1.0).is_err());
    }
}
