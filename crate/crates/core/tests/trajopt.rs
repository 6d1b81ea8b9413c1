mod common;

use cacto_core::seeds::indexed_rng;
use cacto_core::trajopt::{solve, solve_controls, warm_start_ics, warm_start_random, warm_start_waypoints, DEFAULT_DETOUR};
use cacto_core::{rollout_controls, Control, ControlProblem, EnvKind, EnvModel, SolverOptions, State};
use common::{random_state, rel_err, LinearQuadratic};
use rand::Rng;

#[test]
fn linear_quadratic_solves_in_one_newton_step() {
    let mut rng = indexed_rng(50, 0);
    let opts = SolverOptions::default();
    for _ in 0..30 {
        let lq = LinearQuadratic::random(&mut rng);
        let x: Vec<f64> = (0..lq.n()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x0 = State::from_parts(&x, 0);
        let guess = vec![Control::zeros(lq.control_dim()); lq.horizon];
        let r = solve_controls(&lq, &x0, &guess, &opts).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 2, "{} iterations", r.iterations);
        assert!(rel_err(r.cost, lq.riccati_cost(&x), 1e-12) < 1e-9);
    }
}

#[test]
fn solutions_respect_bounds_and_are_feasible() {
    let mut rng = indexed_rng(51, 0);
    let opts = SolverOptions::default();
    for kind in EnvKind::ALL {
        let env = EnvModel::default_for(kind);
        for i in 0..3 {
            let x0 = random_state(&env, &mut rng);
            let r = solve(&env, &x0, &warm_start_random(&env, &x0, i), &opts).unwrap();
            let t = &r.trajectory;
            assert!(t.feasible);
            assert_eq!(t.start_time, x0.time());
            assert_eq!(t.len(), env.horizon - x0.time());
            for u in &t.controls {
                assert!(u.iter().zip(&env.u_max).all(|(u, m)| u.abs() <= *m));
            }
            let again = rollout_controls(&env, &x0, &t.controls).unwrap();
            assert_eq!(again.total_cost(), r.cost);
            assert!(r.cost <= r.initial_guess_cost);
        }
    }
}

#[test]
fn resolving_a_solution_refines_it_only_marginally() {
    let env = EnvModel::default_for(EnvKind::DubinsCar);
    let opts = SolverOptions::default();
    let x0 = State::from_parts(&[10.0, 4.0, 1.0, 0.0, 0.0], 20);
    let first = solve(&env, &x0, &warm_start_ics(&env, &x0), &opts).unwrap();
    let second = solve(&env, &x0, &first.trajectory, &opts).unwrap();
    assert_eq!(second.initial_guess_cost, first.cost);
    assert!(second.cost <= first.cost);
    assert!(first.converged);
    assert!(rel_err(second.cost, first.cost, 1.0) < 1e-4, "{} {}", first.cost, second.cost);
}

#[test]
fn hard_region_start_depends_on_the_guess() {
    let env = EnvModel::default_for(EnvKind::DoubleIntegrator);
    let opts = SolverOptions::default();
    let x0 = State::from_parts(&[5.0, 0.0, 0.0, 0.0], 0);
    let ics = solve(&env, &x0, &warm_start_ics(&env, &x0), &opts).unwrap();
    let detour = solve(&env, &x0, &warm_start_waypoints(&env, &x0, &DEFAULT_DETOUR[1..], 1.5).unwrap(), &opts).unwrap();
    assert!(detour.cost < ics.cost, "detour {} ics {}", detour.cost, ics.cost);
    let end = detour.trajectory.final_state();
    let [tx, ty] = env.cost.target;
    assert!((end[0] - tx).hypot(end[1] - ty) < (5.0 - tx).abs());
}

#[test]
fn mismatched_dimensions_rejected() {
    let env = EnvModel::default_for(EnvKind::SingleIntegrator);
    let x0 = State::from_parts(&[0.0, 0.0], 0);
    let guess = vec![Control(vec![0.0; 3]); env.horizon];
    assert!(solve_controls(&env, &x0, &guess, &SolverOptions::default()).is_err());
    let short = State::from_parts(&[0.0], 0);
    let guess = vec![Control::zeros(2); env.horizon];
    assert!(solve_controls(&env, &short, &guess, &SolverOptions::default()).is_err());
}
