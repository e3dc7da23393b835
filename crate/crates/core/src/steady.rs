//! Stationary networks: three straight segments at the Young angles from a
//! junction point, each meeting the boundary at a right angle.

use nalgebra::{DMatrix, DVector};

use crate::domain::{ImplicitDomain, Point};
use crate::error::{Error, Result};
use crate::param::{grid_derivatives, GraphState, Parameterization, StationaryNetwork};
use crate::rotate;
use crate::tension::{young_angles, SurfaceTensions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyGuess {
    pub p: Point,
    pub phi: f64,
    /// Fixes the rotation angle; needed when the domain is rotationally symmetric.
    pub gauge: Option<f64>,
}

impl SteadyGuess {
    pub fn new(p: Point, phi: f64) -> Self {
        Self { p, phi, gauge: None }
    }

    pub fn gauged(p: Point, phi: f64) -> Self {
        Self {
            p,
            phi,
            gauge: Some(phi),
        }
    }
}

/// `(N_i, grad psi / |grad psi|)` where the ray of branch `i` leaves the domain.
pub fn steady_residual(
    domain: &ImplicitDomain,
    tensions: &SurfaceTensions,
    p: Point,
    phi: f64,
) -> Result<[f64; 3]> {
    let tangents = young_angles(tensions).tangents(phi);
    let mut r = [0.0; 3];
    for i in 0..3 {
        let (x, _) = domain.boundary_hit(&p, &tangents[i])?;
        let g = domain.eval(&x).grad;
        let gn = g.norm();
        if !(gn > 0.0) {
            return Err(Error::SingularGradient(x.x, x.y));
        }
        r[i] = rotate(tangents[i]).dot(&g) / gn;
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolution {
    pub network: StationaryNetwork,
    pub iterations: usize,
    pub residual: f64,
    /// Condition number of the Jacobian at the solution.
    pub condition: f64,
}

const FD_STEP: f64 = 1e-7;
pub const SINGULAR_CONDITION: f64 = 1e10;

struct Problem<'a> {
    domain: &'a ImplicitDomain,
    tensions: &'a SurfaceTensions,
    gauge: Option<f64>,
}

impl Problem<'_> {
    fn split(&self, x: &DVector<f64>) -> (Point, f64) {
        (Point::new(x[0], x[1]), self.gauge.unwrap_or_else(|| x[2]))
    }

    fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (p, phi) = self.split(x);
        Ok(DVector::from_row_slice(&steady_residual(self.domain, self.tensions, p, phi)?))
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(3, x.len());
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += FD_STEP;
            xm[k] -= FD_STEP;
            let col = (self.residual(&xp)? - self.residual(&xm)?) / (2.0 * FD_STEP);
            j.set_column(k, &col);
        }
        Ok(j)
    }
}

fn condition(j: &DMatrix<f64>) -> f64 {
    let s = j.clone().svd(false, false).singular_values;
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Damped Newton (Gauss-Newton when the rotation is gauged) on the junction
/// point and rotation angle with a central-difference Jacobian.
pub fn solve_stationary(
    domain: &ImplicitDomain,
    tensions: &SurfaceTensions,
    guess: &SteadyGuess,
    tol: f64,
    max_iter: usize,
) -> Result<SteadySolution> {
    let prob = Problem {
        domain,
        tensions,
        gauge: guess.gauge,
    };
    let mut x = match guess.gauge {
        Some(_) => DVector::from_row_slice(&[guess.p.x, guess.p.y]),
        None => DVector::from_row_slice(&[guess.p.x, guess.p.y, guess.phi]),
    };
    let mut r = prob.residual(&x)?;
    let mut iterations = 0;
    let mut polish = 0;
    while r.norm() >= tol || polish < 1 {
        if r.norm() < tol {
            polish += 1;
        }
        if iterations == max_iter {
            if r.norm() < tol {
                break;
            }
            return Err(Error::NoConvergence(max_iter));
        }
        iterations += 1;
        let j = prob.jacobian(&x)?;
        let cond = condition(&j);
        if cond > SINGULAR_CONDITION {
            return Err(Error::SingularJacobian(cond));
        }
        let step = j
            .svd(true, true)
            .solve(&(-&r), 0.0)
            .map_err(|_| Error::SingularJacobian(cond))?;
        let mut accepted = None;
        let mut t = 1.0;
        while t >= 1.0 / 1024.0 {
            let xt = &x + &step * t;
            if let Ok(rt) = prob.residual(&xt) {
                if rt.norm() < r.norm() {
                    accepted = Some((xt, rt));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((xn, rn)) => {
                x = xn;
                r = rn;
            }
            // no decrease possible: at a fixed point if already converged
            None if r.norm() < tol => break,
            None => return Err(Error::NoConvergence(iterations)),
        }
        if r.norm() == 0.0 {
            break;
        }
    }
    let cond = condition(&prob.jacobian(&x)?);
    if cond > SINGULAR_CONDITION {
        return Err(Error::SingularJacobian(cond));
    }
    let (p, phi) = prob.split(&x);
    let network = StationaryNetwork::on_domain(domain, *tensions, p, phi)?;
    Ok(SteadySolution {
        network,
        iterations,
        residual: r.norm(),
        condition: cond,
    })
}

pub fn find_stationary(
    domain: &ImplicitDomain,
    tensions: &SurfaceTensions,
    guess: &SteadyGuess,
    tol: f64,
    max_iter: usize,
) -> Result<StationaryNetwork> {
    solve_stationary(domain, tensions, guess, tol, max_iter).map(|s| s.network)
}

/// `sum gamma int u^2` by the trapezoid rule on the branch grids, optionally
/// weighted by a per-node metric.
pub(crate) fn weighted_l2_sq(u: &[Vec<f64>; 3], h: [f64; 3], gamma: [f64; 3], w: Option<&[Vec<f64>; 3]>) -> f64 {
    (0..3)
        .map(|i| {
            let n = u[i].len() - 1;
            let s: f64 = (0..=n)
                .map(|j| {
                    let c = if j == 0 || j == n { 0.5 } else { 1.0 };
                    c * u[i][j] * u[i][j] * w.map_or(1.0, |w| w[i][j])
                })
                .sum();
            gamma[i] * h[i] * s
        })
        .sum()
}

/// Ratio `|rho|_{H^2} / |kappa|_{L^2}` along a trajectory, with
/// `|rho|_{H^2} = |rho| + |rho_sigmasigma|` on the parameter grids and
/// `|kappa|^2 = sum gamma int kappa^2 J dsigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct H2Bound {
    pub ratios: Vec<(f64, f64)>,
    pub max: f64,
}

pub fn h2_bound_check(param: &Parameterization, states: &[GraphState]) -> Result<H2Bound> {
    let gamma = param.net.tensions.gamma();
    let mut ratios = Vec::new();
    for st in states {
        let n = st.n();
        let h = [0, 1, 2].map(|i| param.h(i, n));
        let offs = param.offsets(st, None)?;
        let geo = param.geometry(st, &offs)?;
        let kappa = geo.clone().map(|g| g.iter().map(|x| x.kappa).collect::<Vec<_>>());
        let jac = geo.map(|g| g.iter().map(|x| x.j).collect::<Vec<_>>());
        let k = weighted_l2_sq(&kappa, h, gamma, Some(&jac)).sqrt();
        if !(k > 1e-12) {
            continue;
        }
        let dd = [0, 1, 2].map(|i| grid_derivatives(&st.rho[i], h[i]).1);
        let rho = weighted_l2_sq(&st.rho, h, gamma, None).sqrt() + weighted_l2_sq(&dd, h, gamma, None).sqrt();
        ratios.push((st.t, rho / k));
    }
    let max = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(H2Bound { ratios, max })
}
