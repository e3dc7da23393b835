//! Time integration of the graph equation `rho_t = L kappa + Lambda mu_t`
//! on fixed parameter grids.
//!
//! Each step treats `a rho_sigmasigma` implicitly (one tridiagonal solve per
//! branch with Dirichlet data at both ends) and everything else explicitly.
//! The six end values are then fixed by Newton's method so that the junction
//! constraint, the two angle conditions and the three perpendicularity
//! conditions hold; the interior solution depends linearly on the end values,
//! so it is updated exactly along the way.

use nalgebra::{SMatrix, SVector};

use crate::diagnostics::{record, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::param::{slope_end, slope_start, GraphState, Parameterization, DEFAULT_DET_M_FLOOR};
use crate::stability::max_eigenvalue;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Elements per branch.
    pub n: usize,
    pub newton_tol: f64,
    pub newton_max: usize,
    /// Steps between records.
    pub output_every: usize,
    pub det_m_floor: f64,
    /// Runs stop once `max |rho|` exceeds this.
    pub amplitude_cap: f64,
}

impl EvolveConfig {
    /// Defaults with `dt = 0.4 h^2` for the shortest grid spacing `h`.
    pub fn new(n: usize, lengths: [f64; 3], t_end: f64) -> Self {
        let h = lengths.iter().cloned().fold(f64::INFINITY, f64::min) / n as f64;
        Self {
            dt: 0.4 * h * h,
            t_end,
            n,
            newton_tol: 1e-10,
            newton_max: 20,
            output_every: 100,
            det_m_floor: DEFAULT_DET_M_FLOOR,
            amplitude_cap: 0.25 * lengths.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    None,
    /// `rho_i(sigma) = amplitude * sum_k c_ik cos(k pi sigma / l_i)`.
    Cosine { amplitude: f64, coefficients: [Vec<f64>; 3] },
    /// Top eigenfunction of the linearized problem, scaled to `max |rho| = amplitude`.
    Eigenmode { amplitude: f64 },
}

/// Why a run stopped before `t_end`.
#[derive(Debug, Clone, PartialEq)]
pub enum Departure {
    DetMFloor(f64),
    Amplitude(f64),
    DegenerateMetric(f64),
    BoundaryLost,
    NewtonDiverged(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    LeftVicinity { t: f64, cause: Departure },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub states: Vec<GraphState>,
    pub status: RunStatus,
    pub dt: f64,
}

fn departure(e: &Error) -> Option<Departure> {
    match e {
        Error::MatrixMNotInvertible(d) => Some(Departure::DetMFloor(*d)),
        Error::DegenerateMetric(j) => Some(Departure::DegenerateMetric(*j)),
        Error::OffsetMissesBoundary { .. } => Some(Departure::BoundaryLost),
        Error::NewtonDiverged(r) => Some(Departure::NewtonDiverged(*r)),
        _ => None,
    }
}

// Solves a tridiagonal system in place (Thomas algorithm).
fn tridiag(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut b = diag[0];
    c[0] = upper[0] / b;
    rhs[0] /= b;
    for k in 1..m {
        b = diag[k] - lower[k] * c[k - 1];
        c[k] = upper[k] / b;
        rhs[k] = (rhs[k] - lower[k] * rhs[k - 1]) / b;
    }
    for k in (0..m - 1).rev() {
        rhs[k] -= c[k] * rhs[k + 1];
    }
}

/// End-value problem: `rho = base + x0 * left + xn * right` on each branch.
struct EndProblem<'p, 'a> {
    param: &'p Parameterization<'a>,
    base: [Vec<f64>; 3],
    left: [Vec<f64>; 3],
    right: [Vec<f64>; 3],
    guess0: [f64; 3],
    guess_n: [f64; 3],
}

type V6 = SVector<f64, 6>;
type M6 = SMatrix<f64, 6, 6>;

impl EndProblem<'_, '_> {
    fn value(&self, i: usize, j: usize, u: &V6) -> f64 {
        self.base[i][j] + u[i] * self.left[i][j] + u[3 + i] * self.right[i][j]
    }

    fn residual(&self, u: &V6) -> Result<V6> {
        let n = self.base[0].len() - 1;
        let net = self.param.net;
        let r0 = [u[0], u[1], u[2]];
        let mu = net.q.apply(r0);
        let mut s0 = [0.0; 3];
        let mut out = V6::zeros();
        for i in 0..3 {
            let h = self.param.h(i, n);
            let v = |j| self.value(i, j, u);
            s0[i] = slope_start(&[v(0), v(1), v(2)], h);
            let sn = slope_end(&[v(n - 2), v(n - 1), v(n)], h);
            out[3 + i] = self.param.outer_residual_raw(i, v(n), sn, mu[i], Some(self.guess_n[i]))?;
        }
        let (g12, g13) = self.param.junction_residuals_raw(r0, s0, mu, Some(self.guess0))?;
        out[0] = net.tensions.weighted_sum(r0);
        out[1] = g12;
        out[2] = g13;
        Ok(out)
    }

    fn jacobian(&self, u: &V6) -> Result<M6> {
        let mut jac = M6::zeros();
        let e = 1e-7;
        for k in 0..6 {
            let mut up = *u;
            let mut um = *u;
            up[k] += e;
            um[k] -= e;
            jac.set_column(k, &((self.residual(&up)? - self.residual(&um)?) / (2.0 * e)));
        }
        Ok(jac)
    }

    /// Newton on the end values. `jac` carries a Jacobian between calls; a
    /// stale one is refreshed as soon as it stops contracting well.
    fn solve(&self, mut u: V6, tol: f64, max_iter: usize, jac: &mut Option<M6>) -> Result<V6> {
        let mut r = self.residual(&u)?;
        let mut fresh = false;
        let mut it = 0;
        while r.amax() >= tol {
            if it == max_iter {
                return Err(Error::NewtonDiverged(r.amax()));
            }
            it += 1;
            if jac.is_none() {
                *jac = Some(self.jacobian(&u)?);
                fresh = true;
            }
            let j = jac.unwrap();
            let du = j.lu().solve(&(-r)).ok_or(Error::NewtonDiverged(r.amax()))?;
            let mut t = 1.0;
            loop {
                let trial = u + du * t;
                match self.residual(&trial) {
                    Ok(rt) if rt.amax() < 0.25 * r.amax() || (fresh && rt.amax() < r.amax()) => {
                        u = trial;
                        r = rt;
                        break;
                    }
                    _ if !fresh => {
                        *jac = None;
                        break;
                    }
                    _ if t < 1.0 / 64.0 => return Err(Error::NewtonDiverged(r.amax())),
                    _ => t *= 0.5,
                }
            }
            if !r.amax().is_finite() {
                return Err(Error::NewtonDiverged(f64::INFINITY));
            }
        }
        Ok(u)
    }
}

fn unit(n: usize, j: usize) -> Vec<f64> {
    let mut v = vec![0.0; n + 1];
    v[j] = 1.0;
    v
}

/// Smooth correction onto `sum gamma rho(0) = 0`, then a Newton correction of
/// the six end values so that all boundary conditions hold.
pub fn initial_state(param: &Parameterization, perturbation: &Perturbation, cfg: &EvolveConfig) -> Result<GraphState> {
    let net = param.net;
    let n = cfg.n;
    let mut st = GraphState::zero(n);
    match perturbation {
        Perturbation::None => return Ok(st),
        Perturbation::Cosine { amplitude, coefficients } => {
            for i in 0..3 {
                for j in 0..=n {
                    let x = std::f64::consts::PI * j as f64 / n as f64;
                    st.rho[i][j] = amplitude
                        * coefficients[i]
                            .iter()
                            .enumerate()
                            .map(|(k, c)| c * (k as f64 * x).cos())
                            .sum::<f64>();
                }
            }
        }
        Perturbation::Eigenmode { amplitude } => {
            let s = max_eigenvalue(net, n)?;
            st.rho = s.eigenfunction.map(|v| v.into_iter().map(|x| x * amplitude).collect());
        }
    }
    let g = net.tensions.gamma();
    let alpha = net.tensions.weighted_sum(st.rho0()) / g.iter().map(|x| x * x).sum::<f64>();
    for i in 0..3 {
        for j in 0..=n {
            let w = 0.5 * (1.0 + (std::f64::consts::PI * j as f64 / n as f64).cos());
            st.rho[i][j] -= alpha * g[i] * w;
        }
    }
    let ends = EndProblem {
        param,
        base: st.rho.clone().map(|mut v| {
            v[0] = 0.0;
            v[n] = 0.0;
            v
        }),
        left: [unit(n, 0), unit(n, 0), unit(n, 0)],
        right: [unit(n, n), unit(n, n), unit(n, n)],
        guess0: net.lengths,
        guess_n: net.lengths,
    };
    let u0 = V6::from_iterator((0..3).map(|i| st.rho[i][0]).chain((0..3).map(|i| st.rho[i][n])));
    let u = ends.solve(u0, cfg.newton_tol, cfg.newton_max.max(30), &mut None).map_err(|e| match e {
        Error::NewtonDiverged(r) => Error::CompatibilityFailed(r),
        other => other,
    })?;
    for i in 0..3 {
        st.rho[i][0] = u[i];
        st.rho[i][n] = u[3 + i];
    }
    st.mu = net.q.apply(st.rho0());
    Ok(st)
}

/// Stepper holding warm starts for the boundary offsets.
pub struct Integrator<'a> {
    pub param: Parameterization<'a>,
    pub cfg: EvolveConfig,
    guess: Option<[Vec<f64>; 3]>,
    jac: Option<M6>,
}

impl<'a> Integrator<'a> {
    pub fn new(param: Parameterization<'a>, cfg: EvolveConfig) -> Self {
        Self {
            param,
            cfg,
            guess: None,
            jac: None,
        }
    }

    /// Largest stable step at the given coefficients.
    fn step_limit(&self, a: &[Vec<f64>; 3], n: usize) -> f64 {
        (0..3)
            .map(|i| {
                let h = self.param.h(i, n);
                let amax = a[i][1..n].iter().cloned().fold(0.0, f64::max);
                0.5 * h * h / amax
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn step(&mut self, state: &GraphState) -> Result<GraphState> {
        let n = state.n();
        let dt = self.cfg.dt;
        let offs = self.param.offsets(state, self.guess.as_ref())?;
        self.guess = Some(offs.clone().map(|v| v.iter().map(|b| b.m).collect()));
        let c = self.param.coefficients_with(state, &offs, self.cfg.det_m_floor)?;
        let limit = self.step_limit(&c.a, n);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, limit });
        }
        let mut base: [Vec<f64>; 3] = Default::default();
        let mut left: [Vec<f64>; 3] = Default::default();
        let mut right: [Vec<f64>; 3] = Default::default();
        for i in 0..3 {
            let h = self.param.h(i, n);
            let rho = &state.rho[i];
            let m = n - 1;
            let (mut lo, mut di, mut up) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
            let mut rhs = vec![0.0; m];
            for k in 0..m {
                let j = k + 1;
                let r = dt * c.a[i][j] / (h * h);
                lo[k] = -r;
                di[k] = 1.0 + 2.0 * r;
                up[k] = -r;
                let dd = (rho[j + 1] - 2.0 * rho[j] + rho[j - 1]) / (h * h);
                rhs[k] = rho[j] + dt * (c.rhs[i][j] - c.a[i][j] * dd);
            }
            let (r1, rm) = (-lo[0], -up[m - 1]);
            let mut eb = rhs;
            tridiag(&lo, &di, &up, &mut eb);
            let mut el = vec![0.0; m];
            el[0] = r1;
            tridiag(&lo, &di, &up, &mut el);
            let mut er = vec![0.0; m];
            er[m - 1] = rm;
            tridiag(&lo, &di, &up, &mut er);
            let pad = |v: Vec<f64>, a: f64, b: f64| {
                let mut out = Vec::with_capacity(n + 1);
                out.push(a);
                out.extend(v);
                out.push(b);
                out
            };
            base[i] = pad(eb, 0.0, 0.0);
            left[i] = pad(el, 1.0, 0.0);
            right[i] = pad(er, 0.0, 1.0);
        }
        let g = self.guess.as_ref().unwrap();
        let ends = EndProblem {
            param: &self.param,
            base,
            left,
            right,
            guess0: [g[0][0], g[1][0], g[2][0]],
            guess_n: [g[0][n], g[1][n], g[2][n]],
        };
        let predict = V6::from_iterator(
            (0..3)
                .map(|i| state.rho[i][0] + dt * c.rhs[i][0])
                .chain((0..3).map(|i| state.rho[i][n] + dt * c.rhs[i][n])),
        );
        let u = ends.solve(predict, self.cfg.newton_tol, self.cfg.newton_max, &mut self.jac)?;
        let rho = [0, 1, 2].map(|i| (0..=n).map(|j| ends.value(i, j, &u)).collect::<Vec<_>>());
        let mut next = GraphState {
            rho,
            mu: [0.0; 3],
            t: state.t + dt,
        };
        next.mu = self.param.net.q.apply(next.rho0());
        Ok(next)
    }
}

/// Integrates to `t_end`, recording every `output_every` steps. Leaving the
/// admissible vicinity ends the run with a `LeftVicinity` status.
pub fn run(param: &Parameterization, init: &GraphState, cfg: &EvolveConfig) -> Result<Trajectory> {
    let mut integ = Integrator::new(*param, *cfg);
    let steps = (cfg.t_end / cfg.dt).round() as usize;
    let every = cfg.output_every.max(1);
    let mut state = init.clone();
    let mut records = vec![record(param, &state, None)?];
    let mut states = vec![state.clone()];
    let mut status = RunStatus::Completed;
    for k in 1..=steps {
        let next = match integ.step(&state) {
            Ok(s) => s,
            Err(e) => match departure(&e) {
                Some(cause) => {
                    status = RunStatus::LeftVicinity { t: state.t, cause };
                    break;
                }
                None => return Err(e),
            },
        };
        let amp = next.max_abs();
        if !(amp <= cfg.amplitude_cap) {
            status = RunStatus::LeftVicinity {
                t: next.t,
                cause: Departure::Amplitude(amp),
            };
            break;
        }
        if k % every == 0 || k == steps {
            match record(param, &next, Some((&state, cfg.dt))) {
                Ok(r) => records.push(r),
                Err(e) => match departure(&e) {
                    Some(cause) => {
                        status = RunStatus::LeftVicinity { t: next.t, cause };
                        break;
                    }
                    None => return Err(e),
                },
            }
            states.push(next.clone());
        }
        state = next;
    }
    Ok(Trajectory {
        records,
        states,
        status,
        dt: cfg.dt,
    })
}

/// Normal and tangential junction velocities of every branch from two
/// consecutive states, `V_i = (p_t, N_i)` and `v_i = (p_t, T_i)`.
pub fn junction_kinematics(
    param: &Parameterization,
    before: &GraphState,
    after: &GraphState,
) -> Result<([f64; 3], [f64; 3])> {
    let dt = after.t - before.t;
    let net = param.net;
    let p = |s: &GraphState| net.p_star + net.tangents[0] * s.mu[0] + net.normals[0] * s.rho[0][0];
    let vel = if dt > 0.0 { (p(after) - p(before)) / dt } else { crate::Point::zeros() };
    let n = after.n();
    let mut big_v = [0.0; 3];
    let mut small_v = [0.0; 3];
    for i in 0..3 {
        let rs = slope_start(&after.rho[i], param.h(i, n));
        let b = param.boundary_offset(i, after.rho[i][0], None)?;
        let ng = param.node_geometry(i, 0.0, rs, 0.0, after.mu[i], &b)?;
        let t = ng.phi_s / ng.j;
        big_v[i] = vel.dot(&crate::rotate(t));
        small_v[i] = vel.dot(&t);
    }
    Ok((big_v, small_v))
}
