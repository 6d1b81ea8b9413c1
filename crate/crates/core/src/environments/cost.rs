//! Non-convex reaching cost: quadratic attraction to a target, a narrow
//! softplus valley around it, softplus walls for three elliptic obstacles and
//! a quadratic control-effort term.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

/// Axis-aligned ellipse; `a` and `b` are full axis lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub a: f64,
    pub b: f64,
}

impl Ellipse {
    /// Zero on the boundary, negative inside, positive outside.
    pub fn level(&self, p: [f64; 2]) -> f64 {
        let (sa, sb) = (self.a / 2.0, self.b / 2.0);
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        dx * dx / (sa * sa) + dy * dy / (sb * sb) - 1.0
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.level(p) < 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostParams {
    pub target: [f64; 2],
    pub w_d: f64,
    pub w_p: f64,
    pub w_ob: f64,
    pub w_u: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub obstacles: Vec<Ellipse>,
    /// Evaluate the valley and obstacle terms with the signs as printed in
    /// the original formula (valley becomes a peak, obstacles reward).
    /// Only useful for auditing; the default gives the intended landscape.
    pub literal_signs: bool,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            target: [-7.0, 0.0],
            w_d: 100.0,
            w_p: 5e5,
            w_ob: 1e6,
            w_u: 10.0,
            c1: 10000.0,
            c2: 100.0,
            c3: 0.1,
            alpha1: 50.0,
            alpha2: 50.0,
            obstacles: default_obstacles(),
            literal_signs: false,
        }
    }
}

/// A C-shaped obstacle opening towards +x: a tall bar between the target and
/// the hard region, and two arms enclosing the hard region from above and
/// below.
pub fn default_obstacles() -> Vec<Ellipse> {
    vec![
        Ellipse { center: [0.0, 0.0], a: 2.0, b: 14.0 },
        Ellipse { center: [2.5, 6.0], a: 7.0, b: 2.0 },
        Ellipse { center: [2.5, -6.0], a: 7.0, b: 2.0 },
    ]
}

/// Numerically stable `ln(1 + e^z)`.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Value, gradient and Hessian of the position-dependent part of the cost.
#[derive(Debug, Clone, Copy)]
pub struct PositionCost {
    pub value: f64,
    pub grad: Vector2<f64>,
    pub hess: Matrix2<f64>,
}

/// The individual (unnormalised) terms, for inspection and tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerms {
    pub distance: f64,
    pub valley: f64,
    pub obstacles: f64,
}

impl CostParams {
    pub fn c4(&self) -> f64 {
        -2.0 * self.c3 - 2.0 * self.c3.sqrt()
    }

    fn valley_sign(&self) -> f64 {
        if self.literal_signs {
            1.0
        } else {
            -1.0
        }
    }

    fn obstacle_sign(&self) -> f64 {
        if self.literal_signs {
            -1.0
        } else {
            1.0
        }
    }

    pub fn terms(&self, p: [f64; 2]) -> CostTerms {
        let dx = p[0] - self.target[0];
        let dy = p[1] - self.target[1];
        let distance = self.w_d * (dx * dx + dy * dy);
        let g = (dx * dx + self.c3).sqrt() + (dy * dy + self.c3).sqrt() + self.c4();
        let valley = self.valley_sign() * self.w_p / self.alpha1 * softplus(-self.alpha1 * g);
        let obstacles = self
            .obstacles
            .iter()
            .map(|e| softplus(-self.alpha2 * e.level(p)))
            .sum::<f64>()
            * self.obstacle_sign()
            * self.w_ob
            / self.alpha2;
        CostTerms { distance, valley, obstacles }
    }

    /// `(l1 + l2 + l3 - c1) / c2` at position `p`, i.e. everything except
    /// the control effort.
    pub fn position_value(&self, p: [f64; 2]) -> f64 {
        let t = self.terms(p);
        (t.distance + t.valley + t.obstacles - self.c1) / self.c2
    }

    /// Control-effort term `w_u ||u||^2 / c2`.
    pub fn control_value(&self, u: &[f64]) -> f64 {
        self.w_u * u.iter().map(|v| v * v).sum::<f64>() / self.c2
    }

    /// Exact value, gradient and Hessian of [`Self::position_value`].
    pub fn position_cost(&self, p: [f64; 2]) -> PositionCost {
        let dx = p[0] - self.target[0];
        let dy = p[1] - self.target[1];

        let mut value = self.w_d * (dx * dx + dy * dy) - self.c1;
        let mut grad = Vector2::new(2.0 * self.w_d * dx, 2.0 * self.w_d * dy);
        let mut hess = Matrix2::identity() * (2.0 * self.w_d);

        // valley: s * (w_p/a1) * softplus(-a1 g)
        let rx = (dx * dx + self.c3).sqrt();
        let ry = (dy * dy + self.c3).sqrt();
        let g = rx + ry + self.c4();
        let g_grad = Vector2::new(dx / rx, dy / ry);
        let g_hess = Matrix2::new(self.c3 / (rx * rx * rx), 0.0, 0.0, self.c3 / (ry * ry * ry));
        let s = self.valley_sign();
        let a1 = self.alpha1;
        let sig = sigmoid(-a1 * g);
        value += s * self.w_p / a1 * softplus(-a1 * g);
        grad -= g_grad * (s * self.w_p * sig);
        hess += g_grad * g_grad.transpose() * (s * self.w_p * a1 * sig * (1.0 - sig))
            - g_hess * (s * self.w_p * sig);

        // obstacles: s * (w_ob/a2) * softplus(-a2 h_i)
        let s = self.obstacle_sign();
        let a2 = self.alpha2;
        for e in &self.obstacles {
            let (sa, sb) = (e.a / 2.0, e.b / 2.0);
            let ox = p[0] - e.center[0];
            let oy = p[1] - e.center[1];
            let h = ox * ox / (sa * sa) + oy * oy / (sb * sb) - 1.0;
            let h_grad = Vector2::new(2.0 * ox / (sa * sa), 2.0 * oy / (sb * sb));
            let h_hess = Matrix2::new(2.0 / (sa * sa), 0.0, 0.0, 2.0 / (sb * sb));
            let sig = sigmoid(-a2 * h);
            value += s * self.w_ob / a2 * softplus(-a2 * h);
            grad -= h_grad * (s * self.w_ob * sig);
            hess += h_grad * h_grad.transpose() * (s * self.w_ob * a2 * sig * (1.0 - sig))
                - h_hess * (s * self.w_ob * sig);
        }

        let inv = 1.0 / self.c2;
        PositionCost {
            value: value * inv,
            grad: grad * inv,
            hess: hess * inv,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if !(self.alpha1 > 0.0 && self.alpha2 > 0.0) {
            return Err(Error::Config("alpha1 and alpha2 must be positive".into()));
        }
        if !(self.c3 > 0.0) {
            return Err(Error::Config("c3 must be positive".into()));
        }
        if self.c2 == 0.0 {
            return Err(Error::Config("c2 must be nonzero".into()));
        }
        if self.obstacles.iter().any(|e| !(e.a > 0.0 && e.b > 0.0)) {
            return Err(Error::Config("obstacle axes must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(params: &CostParams, p: [f64; 2]) {
        let c = params.position_cost(p);
        let h = 1e-5;
        for i in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[i] += h;
            pm[i] -= h;
            let fd = (params.position_value(pp) - params.position_value(pm)) / (2.0 * h);
            let tol = 1e-5 * fd.abs().max(c.grad[i].abs()).max(1.0);
            assert!((fd - c.grad[i]).abs() <= tol, "grad {i} at {p:?}: {} vs {fd}", c.grad[i]);
            let gp = params.position_cost(pp).grad;
            let gm = params.position_cost(pm).grad;
            for j in 0..2 {
                let fd = (gp[j] - gm[j]) / (2.0 * h);
                let tol = 1e-5 * fd.abs().max(c.hess[(j, i)].abs()).max(1.0);
                assert!(
                    (fd - c.hess[(j, i)]).abs() <= tol,
                    "hess ({j},{i}) at {p:?}: {} vs {fd}",
                    c.hess[(j, i)]
                );
            }
        }
    }

    #[test]
    fn c4_matches_formula() {
        let p = CostParams::default();
        assert!((p.c4() - (-0.832_455_532_033_676)).abs() < 1e-12);
    }

    #[test]
    fn distance_term_vanishes_at_target() {
        let p = CostParams::default();
        assert_eq!(p.terms(p.target).distance, 0.0);
        assert_eq!(p.control_value(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn target_is_a_valley_and_obstacles_are_peaks() {
        let p = CostParams::default();
        let at_target = p.position_value(p.target);
        let away = p.position_value([p.target[0] + 3.0, p.target[1]]);
        assert!(at_target < away);
        for e in &p.obstacles {
            let inside = p.terms(e.center).obstacles;
            let outside = p.terms([e.center[0] + 2.0 * e.a, e.center[1]]).obstacles;
            assert!(inside > outside);
            // normalised penalty at the centre is large
            assert!(inside / p.c2 > 1e3);
        }
        assert!(p.terms(p.target).valley < p.terms([p.target[0] + 3.0, 0.0]).valley);
    }

    #[test]
    fn literal_signs_flip_the_landscape() {
        let p = CostParams { literal_signs: true, ..CostParams::default() };
        assert!(p.terms(p.target).valley > 0.0);
        assert!(p.terms(p.obstacles[0].center).obstacles < 0.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = CostParams::default();
        let probes = [
            [-7.0, 0.0],
            [-7.05, 0.1],
            [-6.9, -0.12],
            [1.0, 0.3],
            [0.9, 6.8],
            [5.0, 5.2],
            [10.0, -3.0],
            [-12.0, 8.0],
        ];
        for q in probes {
            fd_check(&p, q);
        }
        let lit = CostParams { literal_signs: true, ..p };
        for q in probes {
            fd_check(&lit, q);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(softplus(-1000.0), 0.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
