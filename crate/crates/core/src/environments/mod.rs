//! The four benchmark systems sharing one reaching cost.
//!
//! | system            | state (without time)         | control          |
//! |-------------------|------------------------------|------------------|
//! | single integrator | `x, y`                       | `vx, vy`         |
//! | double integrator | `x, y, vx, vy`               | `ax, ay`         |
//! | Dubins car        | `x, y, theta, v, a`          | `omega, jerk`    |
//! | manipulator       | `q1, q2, q3, qd1, qd2, qd3`  | joint torques    |
//!
//! All systems are discretised with explicit Euler steps of length `dt`.

mod cost;
mod manipulator;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

pub use self::cost::{default_obstacles, sigmoid, softplus, CostParams, CostTerms, Ellipse, PositionCost};
pub use self::manipulator::{ManipulatorGeometry, MassMatrix};
use crate::dyncore::{Control, ControlProblem, Derivatives, State, TerminalDerivatives};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    SingleIntegrator,
    DoubleIntegrator,
    DubinsCar,
    Manipulator,
}

impl EnvKind {
    pub const ALL: [EnvKind; 4] = [
        EnvKind::SingleIntegrator,
        EnvKind::DoubleIntegrator,
        EnvKind::DubinsCar,
        EnvKind::Manipulator,
    ];

    /// State dimension including the time component.
    pub fn state_dim(self) -> usize {
        match self {
            EnvKind::SingleIntegrator => 3,
            EnvKind::DoubleIntegrator => 5,
            EnvKind::DubinsCar => 6,
            EnvKind::Manipulator => 7,
        }
    }

    pub fn control_dim(self) -> usize {
        match self {
            EnvKind::Manipulator => 3,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::SingleIntegrator => "single-integrator",
            EnvKind::DoubleIntegrator => "double-integrator",
            EnvKind::DubinsCar => "dubins-car",
            EnvKind::Manipulator => "manipulator",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown environment '{s}'")))
    }
}

/// Box bounds on the physical state components, used for initial-state
/// sampling, input normalisation and random warm starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StateBounds {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.lower.len() != dim || self.upper.len() != dim {
            return Err(Error::Dimension {
                what: "state bounds",
                expected: dim,
                got: self.lower.len().min(self.upper.len()),
            });
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Config("state bounds must satisfy lower < upper".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvModel {
    pub kind: EnvKind,
    pub dt: f64,
    pub horizon: usize,
    pub u_max: Vec<f64>,
    pub cost: CostParams,
    pub geometry: ManipulatorGeometry,
    /// Cartesian workspace `[[x_min, x_max], [y_min, y_max]]` of the point,
    /// car or end effector.
    pub workspace: [[f64; 2]; 2],
    pub state_bounds: StateBounds,
}

const WORKSPACE: [[f64; 2]; 2] = [[-15.0, 25.0], [-10.0, 10.0]];

impl EnvModel {
    pub fn default_for(kind: EnvKind) -> Self {
        use std::f64::consts::PI;
        let [[x0, x1], [y0, y1]] = WORKSPACE;
        let (u_max, lower, upper) = match kind {
            EnvKind::SingleIntegrator => (vec![4.0, 4.0], vec![x0, y0], vec![x1, y1]),
            EnvKind::DoubleIntegrator => (
                vec![10.0, 10.0],
                vec![x0, y0, -5.0, -5.0],
                vec![x1, y1, 5.0, 5.0],
            ),
            EnvKind::DubinsCar => (
                vec![2.0, 5.0],
                vec![x0, y0, -PI, -5.0, -5.0],
                vec![x1, y1, PI, 5.0, 5.0],
            ),
            EnvKind::Manipulator => (
                vec![200.0; 3],
                vec![-PI, -PI, -PI, -0.5, -0.5, -0.5],
                vec![PI, PI, PI, 0.5, 0.5, 0.5],
            ),
        };
        let mut cost = CostParams::default();
        if kind == EnvKind::Manipulator {
            cost.target = [-20.0, 0.0];
        }
        EnvModel {
            kind,
            dt: 0.05,
            horizon: 100,
            u_max,
            cost,
            geometry: ManipulatorGeometry::default(),
            workspace: WORKSPACE,
            state_bounds: StateBounds { lower, upper },
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::dyncore::OcpSpec {
            horizon: self.horizon,
            dt: self.dt,
            u_max: self.u_max.clone(),
        }
        .validate()?;
        if self.u_max.len() != self.kind.control_dim() {
            return Err(Error::Dimension {
                what: "control bounds",
                expected: self.kind.control_dim(),
                got: self.u_max.len(),
            });
        }
        self.state_bounds.validate(self.kind.state_dim() - 1)?;
        self.cost.validate()?;
        if self.kind == EnvKind::Manipulator
            && self
                .geometry
                .lengths
                .iter()
                .chain(&self.geometry.masses)
                .any(|v| !(*v > 0.0))
        {
            return Err(Error::Config("link lengths and masses must be positive".into()));
        }
        Ok(())
    }

    /// Cartesian point the cost is evaluated at: the state position, or the
    /// end effector for the manipulator.
    pub fn cost_point(&self, x: &[f64]) -> [f64; 2] {
        match self.kind {
            EnvKind::Manipulator => self.forward_kinematics(&x[..3]),
            _ => [x[0], x[1]],
        }
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> [f64; 2] {
        self.geometry.forward_kinematics(q)
    }

    pub fn inverse_kinematics(&self, target: [f64; 2], phi: f64) -> Result<[f64; 3]> {
        self.geometry.inverse_kinematics(target, phi)
    }

    /// Physical state at rest with the cost point at `(x, y)`. Uses inverse
    /// kinematics with end-effector orientation `phi` for the manipulator.
    pub fn rest_state_at(&self, x: f64, y: f64, phi: f64, time: usize) -> Result<State> {
        let n = self.kind.state_dim() - 1;
        let mut phys = vec![0.0; n];
        match self.kind {
            EnvKind::Manipulator => {
                let q = self.inverse_kinematics([x, y], phi)?;
                phys[..3].copy_from_slice(&q);
            }
            _ => {
                phys[0] = x;
                phys[1] = y;
            }
        }
        Ok(State::from_parts(&phys, time))
    }

    fn position_grad_hess(&self, x: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = self.kind.state_dim() - 1;
        let p = self.cost_point(x);
        let pc = self.cost.position_cost(p);
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        match self.kind {
            EnvKind::Manipulator => {
                let (gq, hq) = self.geometry.end_effector_hessian_terms(
                    &x[..3],
                    Vector2::new(pc.grad[0], pc.grad[1]),
                    pc.hess,
                );
                for i in 0..3 {
                    g[i] = gq[i];
                    for j in 0..3 {
                        h[(i, j)] = hq[(i, j)];
                    }
                }
            }
            _ => {
                for i in 0..2 {
                    g[i] = pc.grad[i];
                    for j in 0..2 {
                        h[(i, j)] = pc.hess[(i, j)];
                    }
                }
            }
        }
        (pc.value, g, h)
    }

    /// Physical next state, without the time component.
    fn next_physical(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let dt = self.dt;
        match self.kind {
            EnvKind::SingleIntegrator => vec![x[0] + dt * u[0], x[1] + dt * u[1]],
            EnvKind::DoubleIntegrator => vec![
                x[0] + dt * x[2],
                x[1] + dt * x[3],
                x[2] + dt * u[0],
                x[3] + dt * u[1],
            ],
            EnvKind::DubinsCar => {
                let (s, c) = x[2].sin_cos();
                vec![
                    x[0] + dt * x[3] * c,
                    x[1] + dt * x[3] * s,
                    x[2] + dt * u[0],
                    x[3] + dt * x[4],
                    x[4] + dt * u[1],
                ]
            }
            EnvKind::Manipulator => {
                let qdd = self.geometry.forward_dynamics(&x[..3], &x[3..6], u);
                vec![
                    x[0] + dt * x[3],
                    x[1] + dt * x[4],
                    x[2] + dt * x[5],
                    x[3] + dt * qdd[0],
                    x[4] + dt * qdd[1],
                    x[5] + dt * qdd[2],
                ]
            }
        }
    }

    /// Jacobians of the physical dynamics.
    fn dynamics_jacobians(&self, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let dt = self.dt;
        let n = self.kind.state_dim() - 1;
        let m = self.kind.control_dim();
        let mut fx = DMatrix::identity(n, n);
        let mut fu = DMatrix::zeros(n, m);
        match self.kind {
            EnvKind::SingleIntegrator => {
                fu[(0, 0)] = dt;
                fu[(1, 1)] = dt;
            }
            EnvKind::DoubleIntegrator => {
                fx[(0, 2)] = dt;
                fx[(1, 3)] = dt;
                fu[(2, 0)] = dt;
                fu[(3, 1)] = dt;
            }
            EnvKind::DubinsCar => {
                let (s, c) = x[2].sin_cos();
                fx[(0, 2)] = -dt * x[3] * s;
                fx[(0, 3)] = dt * c;
                fx[(1, 2)] = dt * x[3] * c;
                fx[(1, 3)] = dt * s;
                fx[(3, 4)] = dt;
                fu[(2, 0)] = dt;
                fu[(4, 1)] = dt;
            }
            EnvKind::Manipulator => {
                let (_, dq, dqd, minv) =
                    self.geometry.dynamics_derivatives(&x[..3], &x[3..6], u);
                for i in 0..3 {
                    fx[(i, 3 + i)] = dt;
                    for j in 0..3 {
                        fx[(3 + i, j)] = dt * dq[(i, j)];
                        fx[(3 + i, 3 + j)] += dt * dqd[(i, j)];
                        fu[(3 + i, j)] = dt * minv[(i, j)];
                    }
                }
            }
        }
        (fx, fu)
    }

    fn check_state(&self, x: &State) {
        debug_assert_eq!(x.len(), self.kind.state_dim(), "state dimension");
    }
}

impl ControlProblem for EnvModel {
    fn state_dim(&self) -> usize {
        self.kind.state_dim()
    }

    fn control_dim(&self) -> usize {
        self.kind.control_dim()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn control_bounds(&self) -> &[f64] {
        &self.u_max
    }

    fn step(&self, x: &State, u: &Control) -> State {
        self.check_state(x);
        let mut next = self.next_physical(x.physical(), u);
        next.push(x.time_f64() + 1.0);
        State(next)
    }

    fn running_cost(&self, x: &State, u: &Control) -> f64 {
        self.cost.position_value(self.cost_point(x)) + self.cost.control_value(u)
    }

    fn terminal_cost(&self, x: &State) -> f64 {
        self.cost.position_value(self.cost_point(x))
    }

    fn derivatives(&self, x: &State, u: &Control) -> Derivatives {
        let m = self.kind.control_dim();
        let n = self.kind.state_dim() - 1;
        let (f_x, f_u) = self.dynamics_jacobians(x.physical(), u);
        let (_, l_x, l_xx) = self.position_grad_hess(x.physical());
        let k = 2.0 * self.cost.w_u / self.cost.c2;
        Derivatives {
            f_x,
            f_u,
            l_x,
            l_u: DVector::from_iterator(m, u.iter().map(|v| k * v)),
            l_xx,
            l_uu: DMatrix::identity(m, m) * k,
            l_ux: DMatrix::zeros(m, n),
        }
    }

    fn terminal_derivatives(&self, x: &State) -> TerminalDerivatives {
        let (_, l_x, l_xx) = self.position_grad_hess(x.physical());
        TerminalDerivatives { l_x, l_xx }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(env: &EnvModel, rng: &mut ChaCha8Rng) -> State {
        let b = &env.state_bounds;
        let phys: Vec<f64> = (0..b.dim())
            .map(|i| rng.random_range(b.lower[i]..b.upper[i]))
            .collect();
        State::from_parts(&phys, rng.random_range(0..env.horizon))
    }

    fn random_control(env: &EnvModel, rng: &mut ChaCha8Rng) -> Control {
        Control(env.u_max.iter().map(|&b| rng.random_range(-b..b)).collect())
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn single_integrator_step() {
        let env = EnvModel::default_for(EnvKind::SingleIntegrator);
        let x = State::from_parts(&[0.0, 0.0], 7);
        let next = env.step(&x, &Control(vec![4.0, 4.0]));
        assert!((next[0] - 0.2).abs() < 1e-15);
        assert!((next[1] - 0.2).abs() < 1e-15);
        assert_eq!(next.time(), 8);
    }

    #[test]
    fn dubins_turning_in_place() {
        let env = EnvModel::default_for(EnvKind::DubinsCar);
        let x = State::from_parts(&[1.0, 2.0, 0.3, 0.0, 0.0], 0);
        let next = env.step(&x, &Control(vec![1.5, 0.0]));
        assert_eq!(next[0], 1.0);
        assert_eq!(next[1], 2.0);
        assert!((next[2] - (0.3 + env.dt * 1.5)).abs() < 1e-15);
    }

    #[test]
    fn manipulator_holds_still_under_bias_torque() {
        let env = EnvModel::default_for(EnvKind::Manipulator);
        let q = [0.5, -0.4, 1.0];
        let h = env.geometry.bias_torques(&q, &[0.0; 3]);
        let x = State::from_parts(&[q[0], q[1], q[2], 0.0, 0.0, 0.0], 0);
        let next = env.step(&x, &Control(vec![h[0], h[1], h[2]]));
        for i in 0..6 {
            assert!((next[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn single_integrator_control_jacobian() {
        let env = EnvModel::default_for(EnvKind::SingleIntegrator);
        let x = State::from_parts(&[3.0, -1.0], 0);
        let d = env.derivatives(&x, &Control(vec![1.0, 2.0]));
        assert_eq!(d.f_u, DMatrix::identity(2, 2) * env.dt);
    }

    #[test]
    fn control_gradient_is_linear_in_u() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in EnvKind::ALL {
            let env = EnvModel::default_for(kind);
            let x = random_state(&env, &mut rng);
            let u = random_control(&env, &mut rng);
            let d = env.derivatives(&x, &u);
            for i in 0..u.len() {
                assert!((d.l_u[i] - 2.0 * env.cost.w_u / env.cost.c2 * u[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn effort_symmetry_for_integrators() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [EnvKind::SingleIntegrator, EnvKind::DoubleIntegrator] {
            let env = EnvModel::default_for(kind);
            for _ in 0..100 {
                let x = random_state(&env, &mut rng);
                let u = random_control(&env, &mut rng);
                let neg = Control(u.iter().map(|v| -v).collect());
                assert_eq!(env.running_cost(&x, &u), env.running_cost(&x, &neg));
            }
        }
    }

    /// Central differences on every Jacobian and Hessian entry.
    pub(crate) fn check_derivatives(env: &EnvModel, x: &State, u: &Control, rel: f64) {
        let h = 1e-5;
        let n = env.state_dim() - 1;
        let m = env.control_dim();
        let d = env.derivatives(x, u);
        let perturb_x = |i: usize, s: f64| {
            let mut y = x.clone();
            y[i] += s;
            y
        };
        let perturb_u = |i: usize, s: f64| {
            let mut v = u.clone();
            v[i] += s;
            v
        };
        for j in 0..n {
            let (xp, xm) = (perturb_x(j, h), perturb_x(j, -h));
            let fp = env.step(&xp, u);
            let fm = env.step(&xm, u);
            for i in 0..n {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!(close(d.f_x[(i, j)], fd, rel), "{:?} f_x({i},{j}) {} vs {fd}", env.kind, d.f_x[(i, j)]);
            }
            let fd = (env.running_cost(&xp, u) - env.running_cost(&xm, u)) / (2.0 * h);
            assert!(close(d.l_x[j], fd, rel), "{:?} l_x({j}) {} vs {fd}", env.kind, d.l_x[j]);
            let gp = env.derivatives(&xp, u);
            let gm = env.derivatives(&xm, u);
            for i in 0..n {
                let fd = (gp.l_x[i] - gm.l_x[i]) / (2.0 * h);
                assert!(close(d.l_xx[(i, j)], fd, rel), "{:?} l_xx({i},{j}) {} vs {fd}", env.kind, d.l_xx[(i, j)]);
            }
            for i in 0..m {
                let fd = (gp.l_u[i] - gm.l_u[i]) / (2.0 * h);
                assert!(close(d.l_ux[(i, j)], fd, rel));
            }
        }
        for j in 0..m {
            let (up, um) = (perturb_u(j, h), perturb_u(j, -h));
            let fp = env.step(x, &up);
            let fm = env.step(x, &um);
            for i in 0..n {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!(close(d.f_u[(i, j)], fd, rel), "{:?} f_u({i},{j}) {} vs {fd}", env.kind, d.f_u[(i, j)]);
            }
            let fd = (env.running_cost(x, &up) - env.running_cost(x, &um)) / (2.0 * h);
            assert!(close(d.l_u[j], fd, rel));
            let gp = env.derivatives(x, &up);
            let gm = env.derivatives(x, &um);
            for i in 0..m {
                let fd = (gp.l_u[i] - gm.l_u[i]) / (2.0 * h);
                assert!(close(d.l_uu[(i, j)], fd, rel));
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in EnvKind::ALL {
            let env = EnvModel::default_for(kind);
            for _ in 0..20 {
                let x = random_state(&env, &mut rng);
                let u = random_control(&env, &mut rng);
                check_derivatives(&env, &x, &u, 1e-5);
            }
        }
    }

    #[test]
    fn fk_ik_round_trip() {
        let env = EnvModel::default_for(EnvKind::Manipulator);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        while checked < 1000 {
            let x = rng.random_range(-40.0..30.0);
            let y = rng.random_range(-30.0..30.0);
            let phi = rng.random_range(-3.0..3.0);
            if let Ok(q) = env.inverse_kinematics([x, y], phi) {
                let p = env.forward_kinematics(&q);
                assert!((p[0] - x).abs() < 1e-9 && (p[1] - y).abs() < 1e-9);
                checked += 1;
            }
        }
    }

    #[test]
    fn fk_matches_complex_chain() {
        let env = EnvModel::default_for(EnvKind::Manipulator);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..100 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-3.2..3.2)).collect();
            // z = base + sum L_i exp(i (q_1 + ... + q_i)) as explicit complex products
            let (mut re, mut im) = (env.geometry.base[0], env.geometry.base[1]);
            let (mut rot_re, mut rot_im) = (1.0, 0.0);
            for i in 0..3 {
                let (s, c) = q[i].sin_cos();
                let r = rot_re * c - rot_im * s;
                rot_im = rot_re * s + rot_im * c;
                rot_re = r;
                re += env.geometry.lengths[i] * rot_re;
                im += env.geometry.lengths[i] * rot_im;
            }
            let p = env.forward_kinematics(&q);
            assert!((p[0] - re).abs() < 1e-9 && (p[1] - im).abs() < 1e-9);
        }
    }

    #[test]
    fn env_kind_round_trips_through_name() {
        for kind in EnvKind::ALL {
            assert_eq!(kind.name().parse::<EnvKind>().unwrap(), kind);
        }
        assert!("unicycle".parse::<EnvKind>().is_err());
    }

    #[test]
    fn default_models_validate() {
        for kind in EnvKind::ALL {
            EnvModel::default_for(kind).validate().unwrap();
        }
    }
}
