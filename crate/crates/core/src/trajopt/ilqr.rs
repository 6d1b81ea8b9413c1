use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::boxqp;
use crate::dyncore::{rollout_controls, Control, ControlProblem, Derivatives, State, Trajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step improves the cost by less than this
    /// fraction.
    pub rel_tol: f64,
    /// Stop when the feed-forward step is this small relative to the controls.
    pub grad_tol: f64,
    pub mu_init: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub mu_increase: f64,
    pub mu_decrease: f64,
    /// Step sizes tried are `1, 1/2, ..., 2^-(line_search_steps - 1)`.
    pub line_search_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 200,
            rel_tol: 1e-7,
            grad_tol: 1e-6,
            mu_init: 1e-6,
            mu_min: 1e-9,
            mu_max: 1e10,
            mu_increase: 10.0,
            mu_decrease: 5.0,
            line_search_steps: 11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub trajectory: Trajectory,
    pub cost: f64,
    /// Cost of the guess controls rolled out (clamped) from `x0`.
    pub initial_guess_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub regularization_final: f64,
}

struct Gains {
    feedforward: Vec<DVector<f64>>,
    feedback: Vec<DMatrix<f64>>,
    /// Expected change `alpha * d1 + alpha^2 * d2`.
    d1: f64,
    d2: f64,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn backward_pass<P: ControlProblem + ?Sized>(
    problem: &P,
    traj: &Trajectory,
    derivs: &[Derivatives],
    mu: f64,
    warm: Option<&[DVector<f64>]>,
) -> Option<Gains> {
    let horizon = traj.len();
    let m = problem.control_dim();
    let bounds = DVector::from_column_slice(problem.control_bounds());
    let term = problem.terminal_derivatives(traj.final_state());
    let mut vx = term.l_x;
    let mut vxx = term.l_xx;
    let mut feedforward = vec![DVector::zeros(m); horizon];
    let mut feedback = vec![DMatrix::zeros(0, 0); horizon];
    let (mut d1, mut d2) = (0.0, 0.0);

    for k in (0..horizon).rev() {
        let d = &derivs[k];
        let fx_t = d.f_x.transpose();
        let fu_t = d.f_u.transpose();
        let qx = &d.l_x + &fx_t * &vx;
        let qu = &d.l_u + &fu_t * &vx;
        let vxx_fx = &vxx * &d.f_x;
        let vxx_fu = &vxx * &d.f_u;
        let mut qxx = &d.l_xx + &fx_t * &vxx_fx;
        let mut quu = &d.l_uu + &fu_t * &vxx_fu;
        let qux = &d.l_ux + &fu_t * &vxx_fx;
        symmetrize(&mut qxx);
        symmetrize(&mut quu);
        let quu_reg = &quu + DMatrix::identity(m, m) * mu;

        let u = DVector::from_column_slice(&traj.controls[k]);
        let lower = -&bounds - &u;
        let upper = &bounds - &u;
        let start = warm.map(|w| w[k].clone()).unwrap_or_else(|| DVector::zeros(m));
        let sol = boxqp::solve(&quu_reg, &qu, &lower, &upper, &start)?;
        let kff = sol.x;
        let n = d.f_x.nrows();
        let mut kfb = DMatrix::zeros(m, n);
        if let Some(factor) = &sol.free_factor {
            let idx: Vec<usize> = (0..m).filter(|&i| sol.free[i]).collect();
            let rhs = DMatrix::from_fn(idx.len(), n, |i, j| qux[(idx[i], j)]);
            let gain = -factor.solve(&rhs);
            for (r, &i) in idx.iter().enumerate() {
                kfb.set_row(i, &gain.row(r));
            }
        }

        let kfb_t = kfb.transpose();
        vx = &qx + &kfb_t * (&quu * &kff) + &kfb_t * &qu + qux.transpose() * &kff;
        vxx = &qxx + &kfb_t * &quu * &kfb + &kfb_t * &qux + qux.transpose() * &kfb;
        symmetrize(&mut vxx);
        d1 += kff.dot(&qu);
        d2 += 0.5 * kff.dot(&(&quu * &kff));
        feedforward[k] = kff;
        feedback[k] = kfb;
    }
    Some(Gains { feedforward, feedback, d1, d2 })
}

fn forward_pass<P: ControlProblem + ?Sized>(
    problem: &P,
    nominal: &Trajectory,
    gains: &Gains,
    alpha: f64,
) -> Option<Trajectory> {
    let bounds = problem.control_bounds();
    let x0 = nominal.initial_state();
    let mut k = 0;
    let traj = crate::dyncore::rollout_policy(problem, x0, |x: &State| {
        let xn = nominal.states[k].physical();
        let dx = DVector::from_iterator(xn.len(), x.physical().iter().zip(xn).map(|(a, b)| a - b));
        let du = &gains.feedforward[k] * alpha + &gains.feedback[k] * dx;
        let u = Control(
            nominal.controls[k]
                .iter()
                .zip(du.iter())
                .map(|(u, d)| u + d)
                .collect(),
        );
        k += 1;
        u.clamped(bounds)
    })
    .ok()?;
    traj.total_cost().is_finite().then_some(traj)
}

fn gradient_measure(traj: &Trajectory, gains: &Gains) -> f64 {
    if traj.is_empty() {
        return 0.0;
    }
    let sum: f64 = traj
        .controls
        .iter()
        .zip(&gains.feedforward)
        .map(|(u, k)| {
            u.iter()
                .zip(k.iter())
                .map(|(u, k)| k.abs() / (u.abs() + 1.0))
                .fold(0.0, f64::max)
        })
        .sum();
    sum / traj.len() as f64
}

/// Locally optimises the control sequence of `guess` starting from `x0`.
///
/// The guess controls are clamped and rolled out from `x0` to form a
/// feasible baseline; the returned cost never exceeds the baseline cost.
pub fn solve<P: ControlProblem + ?Sized>(
    problem: &P,
    x0: &State,
    guess: &Trajectory,
    options: &SolverOptions,
) -> Result<SolveReport> {
    solve_controls(problem, x0, &guess.controls, options)
}

pub fn solve_controls<P: ControlProblem + ?Sized>(
    problem: &P,
    x0: &State,
    guess: &[Control],
    options: &SolverOptions,
) -> Result<SolveReport> {
    if let Some(step) = guess.iter().position(|u| u.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite { step });
    }
    let mut traj = rollout_controls(problem, x0, guess)?;
    let initial_guess_cost = traj.total_cost();
    let mut cost = initial_guess_cost;
    let mut mu = options.mu_init;
    let mut iterations = 0;
    let mut converged = traj.is_empty();
    let mut derivs: Vec<Derivatives> = Vec::new();
    let mut need_derivs = true;
    let mut last_ff: Option<Vec<DVector<f64>>> = None;
    let alphas: Vec<f64> = (0..options.line_search_steps)
        .map(|i| 0.5f64.powi(i as i32))
        .collect();

    while !converged && iterations < options.max_iterations {
        iterations += 1;
        if need_derivs {
            derivs = traj
                .controls
                .iter()
                .zip(&traj.states)
                .map(|(u, x)| problem.derivatives(x, u))
                .collect();
            need_derivs = false;
        }
        let Some(gains) = backward_pass(problem, &traj, &derivs, mu, last_ff.as_deref()) else {
            mu *= options.mu_increase;
            if mu > options.mu_max {
                break;
            }
            continue;
        };
        if gradient_measure(&traj, &gains) < options.grad_tol {
            converged = true;
            break;
        }

        let mut accepted = None;
        for &alpha in &alphas {
            if let Some(candidate) = forward_pass(problem, &traj, &gains, alpha) {
                let c = candidate.total_cost();
                if c < cost {
                    accepted = Some((candidate, c));
                    break;
                }
            }
        }
        match accepted {
            Some((candidate, c)) => {
                let improvement = (cost - c) / cost.abs().max(1e-12);
                traj = candidate;
                cost = c;
                need_derivs = true;
                last_ff = Some(gains.feedforward);
                mu = (mu / options.mu_decrease).max(options.mu_min);
                if improvement < options.rel_tol {
                    converged = true;
                }
            }
            None => {
                let expected = -(gains.d1 + gains.d2);
                if expected < options.rel_tol * cost.abs().max(1e-12) {
                    converged = true;
                    break;
                }
                last_ff = None;
                mu *= options.mu_increase;
                if mu > options.mu_max {
                    break;
                }
            }
        }
    }

    Ok(SolveReport {
        trajectory: traj,
        cost,
        initial_guess_cost,
        iterations,
        converged,
        regularization_final: mu,
    })
}
