//! Box-constrained iLQR and the initial guesses it is compared under.

mod boxqp;
mod ilqr;
pub mod warm_start;

pub use ilqr::{solve, solve_controls, SolveReport, SolverOptions};
pub use warm_start::{
    warm_start_ics, warm_start_policy, warm_start_random, warm_start_waypoints, WarmStartKind,
    DEFAULT_DETOUR,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyncore::{rollout_controls, State};
    use crate::environments::{EnvKind, EnvModel};

    #[test]
    fn zero_horizon_returns_terminal_state() {
        let env = EnvModel::default_for(EnvKind::DoubleIntegrator);
        let x0 = State::from_parts(&[1.0, 2.0, 0.0, 0.0], env.horizon);
        let guess = warm_start_ics(&env, &x0);
        let r = solve(&env, &x0, &guess, &SolverOptions::default()).unwrap();
        assert!(r.trajectory.is_empty());
        assert_eq!(r.cost, crate::dyncore::ControlProblem::terminal_cost(&env, &x0));
        assert!(r.converged);
    }

    #[test]
    fn improves_ics_guess_and_stays_feasible() {
        let env = EnvModel::default_for(EnvKind::DoubleIntegrator);
        let x0 = State::from_parts(&[5.0, 0.0, 0.0, 0.0], 0);
        let guess = warm_start_ics(&env, &x0);
        let r = solve(&env, &x0, &guess, &SolverOptions::default()).unwrap();
        assert!(r.cost <= r.initial_guess_cost + 1e-9);
        let resim = rollout_controls(&env, &x0, &r.trajectory.controls).unwrap();
        assert_eq!(resim.states, r.trajectory.states);
        assert_eq!(resim.total_cost(), r.cost);
        for u in &r.trajectory.controls {
            assert!(u.iter().zip(&env.u_max).all(|(v, b)| v.abs() <= *b));
        }
    }

    #[test]
    fn non_finite_guess_is_rejected() {
        let env = EnvModel::default_for(EnvKind::SingleIntegrator);
        let x0 = State::from_parts(&[0.0, 0.0], 98);
        let mut guess = warm_start_ics(&env, &x0);
        guess.controls[1][0] = f64::NAN;
        assert!(solve(&env, &x0, &guess, &SolverOptions::default()).is_err());
    }
}
