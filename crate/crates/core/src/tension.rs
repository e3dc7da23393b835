//! Surface tensions, Young angles and the junction matrix `Q`.
//!
//! Branch labels are cyclic: `theta[k]` is the angle between the tangents of
//! the two other branches. Tangents are ordered counterclockwise, `T1` at the
//! rotation angle `phi`, `T2` at `phi + theta3`, `T3` at `phi + theta3 + theta1`,
//! so that `(Ti, Tj) = cos(theta_k)` and `(Ti, R Tj) = -sin(theta_k)` for
//! `(i, j, k)` in `(1,2,3), (2,3,1), (3,1,2)`.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::rotate;

/// Surface energy densities of the three branches. Mobilities equal the
/// tensions, so the flow reads `V = kappa` on every branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceTensions {
    gamma: [f64; 3],
}

impl SurfaceTensions {
    pub fn new(gamma: [f64; 3]) -> Result<Self> {
        let ok = gamma.iter().all(|g| g.is_finite() && *g > 0.0)
            && (0..3).all(|k| gamma[k] < gamma[(k + 1) % 3] + gamma[(k + 2) % 3]);
        if ok {
            Ok(Self { gamma })
        } else {
            Err(Error::TensionsDegenerate(gamma))
        }
    }

    pub fn uniform() -> Self {
        Self { gamma: [1.0; 3] }
    }

    pub fn gamma(&self) -> [f64; 3] {
        self.gamma
    }

    pub fn get(&self, i: usize) -> f64 {
        self.gamma[i]
    }

    /// `sum gamma_i x_i`.
    pub fn weighted_sum(&self, x: [f64; 3]) -> f64 {
        self.gamma[0] * x[0] + self.gamma[1] * x[1] + self.gamma[2] * x[2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JunctionAngles {
    pub theta: [f64; 3],
    pub cos: [f64; 3],
    pub sin: [f64; 3],
}

impl JunctionAngles {
    /// Angles from explicit values; used for the abstract networks of the
    /// stability module. Values must lie in `(0, pi)` and sum to `2 pi`.
    pub fn from_theta(theta: [f64; 3]) -> Self {
        Self {
            theta,
            cos: theta.map(f64::cos),
            sin: theta.map(f64::sin),
        }
    }

    /// Unit tangents pointing away from the junction, first one at angle `phi`.
    pub fn tangents(&self, phi: f64) -> [Vector2<f64>; 3] {
        let a1 = phi;
        let a2 = phi + self.theta[2];
        let a3 = a2 + self.theta[0];
        [a1, a2, a3].map(|a| Vector2::new(a.cos(), a.sin()))
    }

    pub fn sine_law_residual(&self, tensions: &SurfaceTensions) -> f64 {
        let r = [0, 1, 2].map(|k| self.sin[k] / tensions.get(k));
        let scale = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let spread = r.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
            - r.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        spread / scale
    }

    pub fn sum_residual(&self) -> f64 {
        (self.theta.iter().sum::<f64>() - 2.0 * std::f64::consts::PI).abs()
    }
}

/// Young angles by the law of cosines on the force triangle
/// `gamma_i T_i + gamma_j T_j = -gamma_k T_k`.
pub fn young_angles(tensions: &SurfaceTensions) -> JunctionAngles {
    let g = tensions.gamma();
    let theta = [0, 1, 2].map(|k| {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        let c = (g[k] * g[k] - g[i] * g[i] - g[j] * g[j]) / (2.0 * g[i] * g[j]);
        c.clamp(-1.0, 1.0).acos()
    });
    JunctionAngles::from_theta(theta)
}

/// `Q` with `mu = Q rho(0)` for junction offsets satisfying the stick condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JunctionMatrix {
    pub q: Matrix3<f64>,
    /// `-1 / (1 - c1 c2 c3)`.
    pub d: f64,
}

impl JunctionMatrix {
    pub fn apply(&self, rho0: [f64; 3]) -> [f64; 3] {
        let v = self.q * Vector3::from(rho0);
        [v[0], v[1], v[2]]
    }
}

pub fn junction_matrix(angles: &JunctionAngles) -> JunctionMatrix {
    let [c1, c2, c3] = angles.cos;
    let [s1, s2, s3] = angles.sin;
    let d = -1.0 / (1.0 - c1 * c2 * c3);
    #[rustfmt::skip]
    let q = Matrix3::new(
        c3 * c1 * s2, s3,           c3 * s1,
        c1 * s2,      c1 * c2 * s3, s1,
        s2,           c2 * s3,      c2 * c3 * s1,
    ) * d;
    JunctionMatrix { q, d }
}

/// `|sum gamma_i T_i|`.
pub fn force_balance_residual(tangents: &[Vector2<f64>; 3], tensions: &SurfaceTensions) -> f64 {
    let g = tensions.gamma();
    (tangents[0] * g[0] + tangents[1] * g[1] + tangents[2] * g[2]).norm()
}

/// Maximum over the three pairs of `|mu_i T_i + rho_i N_i - (mu_j T_j + rho_j N_j)|`.
pub fn stick_residual(tangents: &[Vector2<f64>; 3], mu: [f64; 3], rho0: [f64; 3]) -> f64 {
    let p = [0, 1, 2].map(|i| tangents[i] * mu[i] + rotate(tangents[i]) * rho0[i]);
    (0..3)
        .map(|i| (p[i] - p[(i + 1) % 3]).norm())
        .fold(0.0, f64::max)
}
