//! Projected-Newton solver for small box-constrained quadratic programs
//!
//! `min 0.5 x'Hx + g'x  s.t.  lower <= x <= upper`
//!
//! as used in the control-limited backward pass.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

pub(crate) struct BoxQpSolution {
    pub x: DVector<f64>,
    /// True for dimensions not held at a bound.
    pub free: Vec<bool>,
    /// Factor of the Hessian restricted to the free dimensions.
    pub free_factor: Option<Cholesky<f64, Dyn>>,
}

fn project(x: &mut DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

fn objective(h: &DMatrix<f64>, g: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(h * x)) + g.dot(x)
}

fn sub_matrix(h: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| h[(idx[i], idx[j])])
}

/// Returns `None` when the Hessian restricted to the free set is not
/// positive definite.
pub(crate) fn solve(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    x0: &DVector<f64>,
) -> Option<BoxQpSolution> {
    let n = g.len();
    let mut x = x0.clone();
    project(&mut x, lower, upper);
    let mut value = objective(h, g, &x);
    let mut free = vec![true; n];

    for _ in 0..100 {
        let grad = g + h * &x;
        for i in 0..n {
            let at_lower = x[i] <= lower[i] && grad[i] > 0.0;
            let at_upper = x[i] >= upper[i] && grad[i] < 0.0;
            free[i] = !(at_lower || at_upper);
        }
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        if idx.is_empty() {
            break;
        }
        let chol = sub_matrix(h, &idx).cholesky()?;
        let grad_free = DVector::from_iterator(idx.len(), idx.iter().map(|&i| grad[i]));
        if grad_free.norm() < 1e-10 {
            break;
        }
        let step_free = -chol.solve(&grad_free);
        let mut dir = DVector::zeros(n);
        for (k, &i) in idx.iter().enumerate() {
            dir[i] = step_free[k];
        }
        let slope = grad.dot(&dir);
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-20 {
            let mut cand = &x + &dir * step;
            project(&mut cand, lower, upper);
            let v = objective(h, g, &cand);
            if v - value <= 0.1 * step * slope {
                accepted = Some((cand, v));
                break;
            }
            step *= 0.6;
        }
        let Some((cand, v)) = accepted else { break };
        let improvement = value - v;
        x = cand;
        value = v;
        if improvement < 1e-12 * (1.0 + value.abs()) {
            break;
        }
    }

    // final free set and factor consistent with the returned point
    let grad = g + h * &x;
    for i in 0..n {
        let at_lower = x[i] <= lower[i] && grad[i] > 0.0;
        let at_upper = x[i] >= upper[i] && grad[i] < 0.0;
        free[i] = !(at_lower || at_upper);
    }
    let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
    let factor = if idx.is_empty() {
        None
    } else {
        Some(sub_matrix(h, &idx).cholesky()?)
    };
    Some(BoxQpSolution { x, free, free_factor: factor })
}
