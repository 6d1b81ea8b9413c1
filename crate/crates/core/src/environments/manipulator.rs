//! Planar three-link arm: kinematics and rigid-body dynamics of uniform thin
//! rods moving in the horizontal plane.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManipulatorGeometry {
    pub base: [f64; 2],
    pub lengths: [f64; 3],
    pub masses: [f64; 3],
}

impl Default for ManipulatorGeometry {
    fn default() -> Self {
        ManipulatorGeometry {
            base: [-7.0, 0.0],
            lengths: [10.0, 10.0, 10.0],
            masses: [1.0, 1.0, 1.0],
        }
    }
}

fn e(theta: f64) -> Vector2<f64> {
    Vector2::new(theta.cos(), theta.sin())
}

fn e_perp(theta: f64) -> Vector2<f64> {
    Vector2::new(-theta.sin(), theta.cos())
}

/// Mass matrix with its first and second partial derivatives in q.
pub struct MassMatrix {
    pub m: Matrix3<f64>,
    pub dm: [Matrix3<f64>; 3],
    pub ddm: [[Matrix3<f64>; 3]; 3],
}

impl ManipulatorGeometry {
    pub fn reach(&self) -> f64 {
        self.lengths.iter().sum()
    }

    fn absolute_angles(q: &[f64]) -> [f64; 3] {
        [q[0], q[0] + q[1], q[0] + q[1] + q[2]]
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> [f64; 2] {
        let th = Self::absolute_angles(q);
        let mut p = Vector2::new(self.base[0], self.base[1]);
        for i in 0..3 {
            p += e(th[i]) * self.lengths[i];
        }
        [p[0], p[1]]
    }

    /// End-effector Jacobian (2x3) and the Hessians of x and y.
    pub fn fk_derivatives(&self, q: &[f64]) -> (nalgebra::Matrix2x3<f64>, [Matrix3<f64>; 2]) {
        let th = Self::absolute_angles(q);
        let mut jac = nalgebra::Matrix2x3::zeros();
        let mut hx = Matrix3::zeros();
        let mut hy = Matrix3::zeros();
        for j in 0..3 {
            let mut col = Vector2::zeros();
            for i in j..3 {
                col += e_perp(th[i]) * self.lengths[i];
            }
            jac.set_column(j, &col);
            for k in 0..3 {
                let mut h = Vector2::zeros();
                for i in j.max(k)..3 {
                    h -= e(th[i]) * self.lengths[i];
                }
                hx[(j, k)] = h[0];
                hy[(j, k)] = h[1];
            }
        }
        (jac, [hx, hy])
    }

    /// Closed-form inverse kinematics for an end-effector position and
    /// orientation `phi`. Returns the branch with a non-negative elbow angle.
    pub fn inverse_kinematics(&self, target: [f64; 2], phi: f64) -> Result<[f64; 3]> {
        let [l1, l2, l3] = self.lengths;
        let wx = target[0] - self.base[0] - l3 * phi.cos();
        let wy = target[1] - self.base[1] - l3 * phi.sin();
        let r2 = wx * wx + wy * wy;
        let mut c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
        if c2.abs() > 1.0 {
            if c2.abs() - 1.0 < 1e-12 {
                c2 = c2.signum();
            } else {
                return Err(Error::OutOfWorkspace { x: target[0], y: target[1] });
            }
        }
        let q2 = c2.acos();
        let q1 = wy.atan2(wx) - (l2 * q2.sin()).atan2(l1 + l2 * c2);
        let q3 = phi - q1 - q2;
        Ok([q1, q2, q3])
    }

    fn com_coefficients(&self, link: usize, a: usize) -> f64 {
        if a < link {
            self.lengths[a]
        } else {
            0.5 * self.lengths[link]
        }
    }

    fn inertia(&self, link: usize) -> f64 {
        self.masses[link] * self.lengths[link] * self.lengths[link] / 12.0
    }

    /// `M(q)` and its derivatives. Each link's centre-of-mass velocity is a
    /// sum of perpendicular unit vectors on the cumulative angles, so every
    /// entry is a weighted sum of `cos(theta_a - theta_b)`.
    pub fn mass_matrix(&self, q: &[f64]) -> MassMatrix {
        let th = Self::absolute_angles(q);
        let mut m = Matrix3::zeros();
        let mut dm = [Matrix3::zeros(); 3];
        let mut ddm = [[Matrix3::zeros(); 3]; 3];
        // d(theta_a)/d(q_l) = [l <= a]
        let d = |a: usize, l: usize| if l <= a { 1.0 } else { 0.0 };
        for i in 0..3 {
            let mi = self.masses[i];
            for j in 0..=i {
                for k in 0..=i {
                    let mut entry = if j.max(k) <= i { self.inertia(i) } else { 0.0 };
                    for a in j..=i {
                        for b in k..=i {
                            let w = mi * self.com_coefficients(i, a) * self.com_coefficients(i, b);
                            let diff = th[a] - th[b];
                            let (s, c) = diff.sin_cos();
                            entry += w * c;
                            for l in 0..3 {
                                let dl = d(a, l) - d(b, l);
                                if dl == 0.0 {
                                    continue;
                                }
                                dm[l][(j, k)] -= w * s * dl;
                                for p in 0..3 {
                                    let dp = d(a, p) - d(b, p);
                                    ddm[l][p][(j, k)] -= w * c * dl * dp;
                                }
                            }
                        }
                    }
                    m[(j, k)] += entry;
                }
            }
        }
        MassMatrix { m, dm, ddm }
    }

    /// Christoffel symbols of the first kind, `gamma[i][(j, k)]`.
    fn christoffel(dm: &[Matrix3<f64>; 3]) -> [Matrix3<f64>; 3] {
        let mut g = [Matrix3::zeros(); 3];
        for (i, gi) in g.iter_mut().enumerate() {
            for j in 0..3 {
                for k in 0..3 {
                    gi[(j, k)] = 0.5 * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)]);
                }
            }
        }
        g
    }

    /// Joint accelerations `M(q)^-1 (tau - h(q, qd))`.
    pub fn forward_dynamics(&self, q: &[f64], qd: &[f64], tau: &[f64]) -> Vector3<f64> {
        let mm = self.mass_matrix(q);
        let h = Self::bias(&Self::christoffel(&mm.dm), qd);
        let rhs = Vector3::new(tau[0], tau[1], tau[2]) - h;
        mm.m.cholesky().expect("mass matrix is positive definite").solve(&rhs)
    }

    fn bias(gamma: &[Matrix3<f64>; 3], qd: &[f64]) -> Vector3<f64> {
        let v = Vector3::new(qd[0], qd[1], qd[2]);
        Vector3::new(
            v.dot(&(gamma[0] * v)),
            v.dot(&(gamma[1] * v)),
            v.dot(&(gamma[2] * v)),
        )
    }

    /// Velocity-dependent torques `h(q, qd)`.
    pub fn bias_torques(&self, q: &[f64], qd: &[f64]) -> Vector3<f64> {
        let mm = self.mass_matrix(q);
        Self::bias(&Self::christoffel(&mm.dm), qd)
    }

    /// Accelerations and their Jacobians with respect to q, qd and tau.
    pub fn dynamics_derivatives(
        &self,
        q: &[f64],
        qd: &[f64],
        tau: &[f64],
    ) -> (Vector3<f64>, Matrix3<f64>, Matrix3<f64>, Matrix3<f64>) {
        let mm = self.mass_matrix(q);
        let gamma = Self::christoffel(&mm.dm);
        let v = Vector3::new(qd[0], qd[1], qd[2]);
        let h = Self::bias(&gamma, qd);
        let chol = mm.m.cholesky().expect("mass matrix is positive definite");
        let qdd = chol.solve(&(Vector3::new(tau[0], tau[1], tau[2]) - h));
        let minv = chol.inverse();

        // dh_i/dqd = (gamma_i + gamma_i^T) v
        let mut dh_dqd = Matrix3::zeros();
        for i in 0..3 {
            let row = (gamma[i] + gamma[i].transpose()) * v;
            dh_dqd.set_row(i, &row.transpose());
        }
        // dh_i/dq_l uses derivatives of the Christoffel symbols
        let mut dh_dq = Matrix3::zeros();
        for l in 0..3 {
            let ddm_l = [mm.ddm[0][l], mm.ddm[1][l], mm.ddm[2][l]];
            let dgamma = Self::christoffel(&ddm_l);
            let col = Self::bias(&dgamma, qd);
            dh_dq.set_column(l, &col);
        }
        let mut dqdd_dq = Matrix3::zeros();
        for l in 0..3 {
            let rhs = -(mm.dm[l] * qdd) - dh_dq.column(l);
            dqdd_dq.set_column(l, &(minv * rhs));
        }
        let dqdd_dqd = -(minv * dh_dqd);
        (qdd, dqdd_dq, dqdd_dqd, minv)
    }

    pub fn end_effector_hessian_terms(&self, q: &[f64], grad_p: Vector2<f64>, hess_p: Matrix2<f64>) -> (Vector3<f64>, Matrix3<f64>) {
        let (jac, [hx, hy]) = self.fk_derivatives(q);
        let grad_q = jac.transpose() * grad_p;
        let hess_q = jac.transpose() * hess_p * jac + hx * grad_p[0] + hy * grad_p[1];
        (grad_q, hess_q)
    }
}
