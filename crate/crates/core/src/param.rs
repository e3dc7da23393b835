//! Curves written as normal graphs over a stationary network.
//!
//! Branch `i` is `Phi(sigma) = Psi(sigma, rho(sigma), mu)` with
//! `Psi(sigma, q, mu) = p + xi T + q N` and
//! `xi = mu + (sigma / l) (m(q) - mu)`, where `m(q)` is the arc-length position
//! at which the line `p + s T + q N` leaves the domain. The reference lines are
//! extended straight beyond `[0, l]`.

use nalgebra::{Matrix3, Vector3};

use crate::domain::{ImplicitDomain, Point};
use crate::error::{Error, Result};
use crate::rotate;
use crate::tension::{junction_matrix, young_angles, JunctionAngles, JunctionMatrix, SurfaceTensions};

/// Reference configuration: three straight segments from `p_star` meeting at
/// the Young angles, each ending on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryNetwork {
    pub tensions: SurfaceTensions,
    pub angles: JunctionAngles,
    pub q: JunctionMatrix,
    pub p_star: Point,
    /// Direction angle of the first tangent.
    pub phi: f64,
    pub tangents: [Point; 3],
    pub normals: [Point; 3],
    pub lengths: [f64; 3],
    /// Boundary curvature at each endpoint.
    pub curvatures: [f64; 3],
    pub endpoints: [Point; 3],
}

/// Invariant residuals of a stationary network on a domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkCheck {
    pub force_balance: f64,
    pub angle: f64,
    pub on_boundary: f64,
    pub perpendicular: f64,
}

impl NetworkCheck {
    pub fn max(&self) -> f64 {
        self.force_balance
            .max(self.angle)
            .max(self.on_boundary)
            .max(self.perpendicular)
    }
}

impl StationaryNetwork {
    /// Network given only by its lengths and endpoint curvatures; enough for
    /// the linear stability analysis.
    pub fn from_lines(
        tensions: SurfaceTensions,
        p_star: Point,
        phi: f64,
        lengths: [f64; 3],
        curvatures: [f64; 3],
    ) -> Self {
        let angles = young_angles(&tensions);
        let tangents = angles.tangents(phi);
        let normals = tangents.map(rotate);
        let endpoints = [0, 1, 2].map(|i| p_star + tangents[i] * lengths[i]);
        Self {
            tensions,
            angles,
            q: junction_matrix(&angles),
            p_star,
            phi,
            tangents,
            normals,
            lengths,
            curvatures,
            endpoints,
        }
    }

    /// Shoots the three Young rays from `p` and records where they leave the
    /// domain. Perpendicularity is not enforced here.
    pub fn on_domain(
        domain: &ImplicitDomain,
        tensions: SurfaceTensions,
        p: Point,
        phi: f64,
    ) -> Result<Self> {
        let tangents = young_angles(&tensions).tangents(phi);
        let mut lengths = [0.0; 3];
        let mut curvatures = [0.0; 3];
        for i in 0..3 {
            let (x, t) = domain.boundary_hit(&p, &tangents[i])?;
            lengths[i] = t;
            curvatures[i] = domain.boundary_curvature(&x)?;
        }
        Ok(Self::from_lines(tensions, p, phi, lengths, curvatures))
    }

    /// Point of the (extended) reference line of branch `i`.
    pub fn point(&self, i: usize, s: f64) -> Point {
        self.p_star + self.tangents[i] * s
    }

    pub fn check(&self, domain: &ImplicitDomain) -> NetworkCheck {
        let g = self.tensions.gamma();
        let force = (self.tangents[0] * g[0] + self.tangents[1] * g[1] + self.tangents[2] * g[2]).norm();
        let angle = (0..3)
            .map(|k| {
                let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                let c = self.tangents[i].dot(&self.tangents[j]).clamp(-1.0, 1.0);
                (c.acos() - self.angles.theta[k].min(2.0 * std::f64::consts::PI - self.angles.theta[k])).abs()
            })
            .fold(0.0, f64::max);
        let mut on = 0.0_f64;
        let mut perp = 0.0_f64;
        for i in 0..3 {
            let v = domain.eval(&self.endpoints[i]);
            on = on.max(v.psi.abs());
            perp = perp.max((self.normals[i].dot(&v.grad) / v.grad.norm()).abs());
        }
        NetworkCheck {
            force_balance: force,
            angle,
            on_boundary: on,
            perpendicular: perp,
        }
    }
}

/// Graph unknowns on uniform grids with `n + 1` nodes per branch.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    pub rho: [Vec<f64>; 3],
    pub mu: [f64; 3],
    pub t: f64,
}

impl GraphState {
    pub fn zero(n: usize) -> Self {
        Self {
            rho: [vec![0.0; n + 1], vec![0.0; n + 1], vec![0.0; n + 1]],
            mu: [0.0; 3],
            t: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.rho[0].len() - 1
    }

    pub fn rho0(&self) -> [f64; 3] {
        [self.rho[0][0], self.rho[1][0], self.rho[2][0]]
    }

    /// `|sum gamma rho(0)|` and `|mu - Q rho(0)|_inf`.
    pub fn constraint_residuals(&self, net: &StationaryNetwork) -> (f64, f64) {
        let r0 = self.rho0();
        let q = net.q.apply(r0);
        let dmu = (0..3).map(|i| (self.mu[i] - q[i]).abs()).fold(0.0, f64::max);
        (net.tensions.weighted_sum(r0).abs(), dmu)
    }

    pub fn max_abs(&self) -> f64 {
        self.rho
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// First and second grid derivatives: centred inside, one-sided second order
/// at both ends.
pub fn grid_derivatives(u: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = u.len() - 1;
    let mut d1 = vec![0.0; n + 1];
    let mut d2 = vec![0.0; n + 1];
    for j in 1..n {
        d1[j] = (u[j + 1] - u[j - 1]) / (2.0 * h);
        d2[j] = (u[j + 1] - 2.0 * u[j] + u[j - 1]) / (h * h);
    }
    d1[0] = slope_start(u, h);
    d1[n] = slope_end(u, h);
    d2[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / (h * h);
    d2[n] = (2.0 * u[n] - 5.0 * u[n - 1] + 4.0 * u[n - 2] - u[n - 3]) / (h * h);
    (d1, d2)
}

#[inline]
pub fn slope_start(u: &[f64], h: f64) -> f64 {
    (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
}

#[inline]
pub fn slope_end(u: &[f64], h: f64) -> f64 {
    let n = u.len() - 1;
    (3.0 * u[n] - 4.0 * u[n - 1] + u[n - 2]) / (2.0 * h)
}

/// `m(q)` with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryOffset {
    pub m: f64,
    pub dm: f64,
    pub ddm: f64,
}

/// Partial derivatives of `Psi` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiDerivatives {
    pub s: Point,
    pub q: Point,
    pub mu: Point,
    pub ss: Point,
    pub sq: Point,
    pub smu: Point,
    pub qq: Point,
    pub ssq: Point,
    pub ssmu: Point,
}

/// Local quantities of the graph equation at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeGeometry {
    pub phi_s: Point,
    pub phi_ss: Point,
    pub j: f64,
    pub kappa: f64,
    /// `(Psi_q, R Psi_sigma)`.
    pub d: f64,
    /// Coefficient of `kappa` in `rho_t`.
    pub l: f64,
    /// Coefficient of `mu_t` in `rho_t`.
    pub lambda: f64,
    /// Coefficient of `rho_sigmasigma` in `L kappa`.
    pub a: f64,
}

/// Coefficients of the graph equation for a whole state.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub kappa: [Vec<f64>; 3],
    pub l: [Vec<f64>; 3],
    pub lambda: [Vec<f64>; 3],
    pub a: [Vec<f64>; 3],
    pub j: [Vec<f64>; 3],
    /// `I - diag(Lambda(0)) Q`.
    pub m: Matrix3<f64>,
    pub det_m: f64,
    /// `Q M^-1 diag(a(0))`.
    pub a1: Matrix3<f64>,
    /// `Q M^-1 (L kappa)(0)`.
    pub mu_t: [f64; 3],
    /// Full right-hand side `L kappa + Lambda mu_t` at every node.
    pub rhs: [Vec<f64>; 3],
}

pub const DEFAULT_DET_M_FLOOR: f64 = 0.5;
const MIN_METRIC: f64 = 1e-8;

/// Graph parameterization over a stationary network in its domain.
#[derive(Debug, Clone, Copy)]
pub struct Parameterization<'a> {
    pub net: &'a StationaryNetwork,
    pub domain: &'a ImplicitDomain,
}

impl<'a> Parameterization<'a> {
    pub fn new(net: &'a StationaryNetwork, domain: &'a ImplicitDomain) -> Self {
        Self { net, domain }
    }

    pub fn h(&self, i: usize, n: usize) -> f64 {
        self.net.lengths[i] / n as f64
    }

    /// `m(q)`: where the offset line `q` of branch `i` meets the boundary.
    pub fn mu_boundary(&self, i: usize, q: f64) -> Result<f64> {
        Ok(self.boundary_offset(i, q, None)?.m)
    }

    /// `m(q)`, `m'(q)`, `m''(q)` by implicit differentiation of
    /// `psi(p + m T + q N) = 0`.
    pub fn boundary_offset(&self, i: usize, q: f64, guess: Option<f64>) -> Result<BoundaryOffset> {
        let (t, nv) = (self.net.tangents[i], self.net.normals[i]);
        let l = self.net.lengths[i];
        let base = self.net.p_star + nv * q;
        let miss = || Error::OffsetMissesBoundary { branch: i, q };
        let m = self
            .domain
            .line_root(&base, &t, guess.unwrap_or(l), 0.5 * l)
            .ok_or_else(miss)?;
        let v = self.domain.eval(&(base + t * m));
        let fm = v.grad.dot(&t);
        if !(fm > 1e-10 * v.grad.norm()) {
            return Err(miss());
        }
        let fq = v.grad.dot(&nv);
        let ht = v.hess * t;
        let (fmm, fmq, fqq) = (t.dot(&ht), nv.dot(&ht), nv.dot(&(v.hess * nv)));
        let dm = -fq / fm;
        let ddm = -(fmm * dm * dm + 2.0 * fmq * dm + fqq) / fm;
        Ok(BoundaryOffset { m, dm, ddm })
    }

    pub fn psi_map(&self, i: usize, sigma: f64, q: f64, mu: f64) -> Result<Point> {
        let b = self.boundary_offset(i, q, None)?;
        let l = self.net.lengths[i];
        let xi = mu + sigma / l * (b.m - mu);
        Ok(self.net.point(i, xi) + self.net.normals[i] * q)
    }

    pub fn psi_derivatives(&self, i: usize, sigma: f64, q: f64, mu: f64) -> Result<PsiDerivatives> {
        let b = self.boundary_offset(i, q, None)?;
        Ok(self.psi_derivatives_with(i, sigma, mu, &b))
    }

    fn psi_derivatives_with(&self, i: usize, sigma: f64, mu: f64, b: &BoundaryOffset) -> PsiDerivatives {
        let (t, nv) = (self.net.tangents[i], self.net.normals[i]);
        let l = self.net.lengths[i];
        let r = sigma / l;
        PsiDerivatives {
            s: t * ((b.m - mu) / l),
            q: t * (r * b.dm) + nv,
            mu: t * (1.0 - r),
            ss: Point::zeros(),
            sq: t * (b.dm / l),
            smu: -t / l,
            qq: t * (r * b.ddm),
            ssq: Point::zeros(),
            ssmu: Point::zeros(),
        }
    }

    /// Geometry of the graph curve at one node from the local jet of `rho`.
    pub fn node_geometry(
        &self,
        i: usize,
        sigma: f64,
        rho_s: f64,
        rho_ss: f64,
        mu: f64,
        b: &BoundaryOffset,
    ) -> Result<NodeGeometry> {
        let p = self.psi_derivatives_with(i, sigma, mu, b);
        let phi_s = p.s + p.q * rho_s;
        let phi_ss = p.ss + p.sq * (2.0 * rho_s) + p.qq * (rho_s * rho_s) + p.q * rho_ss;
        let j = phi_s.norm();
        if !(j > MIN_METRIC) {
            return Err(Error::DegenerateMetric(j));
        }
        let rs = rotate(phi_s);
        let kappa = phi_ss.dot(&rs) / (j * j * j);
        let d = p.q.dot(&rotate(p.s));
        if !(d > MIN_METRIC) {
            return Err(Error::DegenerateMetric(d));
        }
        let lambda = -(p.mu.dot(&rotate(p.s)) + p.mu.dot(&rotate(p.q)) * rho_s) / d;
        let a = p.q.dot(&rs) / (d * j * j);
        Ok(NodeGeometry {
            phi_s,
            phi_ss,
            j,
            kappa,
            d,
            l: j / d,
            lambda,
            a,
        })
    }

    /// `|Phi_sigma|` at one node.
    pub fn metric_j(&self, i: usize, rho: f64, rho_s: f64, mu: f64, sigma: f64) -> Result<f64> {
        let b = self.boundary_offset(i, rho, None)?;
        Ok(self.node_geometry(i, sigma, rho_s, 0.0, mu, &b)?.j)
    }

    /// Curvature of the graph curve with respect to `N = R Phi_sigma / J`.
    pub fn curvature_kappa(
        &self,
        i: usize,
        rho: f64,
        rho_s: f64,
        rho_ss: f64,
        mu: f64,
        sigma: f64,
    ) -> Result<f64> {
        let b = self.boundary_offset(i, rho, None)?;
        Ok(self.node_geometry(i, sigma, rho_s, rho_ss, mu, &b)?.kappa)
    }

    /// Boundary offsets at every node, warm-started from `guess` if given.
    pub fn offsets(&self, state: &GraphState, guess: Option<&[Vec<f64>; 3]>) -> Result<[Vec<BoundaryOffset>; 3]> {
        let mut out: [Vec<BoundaryOffset>; 3] = Default::default();
        for i in 0..3 {
            out[i] = state.rho[i]
                .iter()
                .enumerate()
                .map(|(j, &q)| self.boundary_offset(i, q, guess.map(|g| g[i][j])))
                .collect::<Result<_>>()?;
        }
        Ok(out)
    }

    pub fn curve_from_graph(&self, state: &GraphState) -> Result<[Vec<Point>; 3]> {
        let offs = self.offsets(state, None)?;
        Ok(self.curve_with(state, &offs))
    }

    pub fn curve_with(&self, state: &GraphState, offs: &[Vec<BoundaryOffset>; 3]) -> [Vec<Point>; 3] {
        let n = state.n();
        [0, 1, 2].map(|i| {
            let mu = state.mu[i];
            (0..=n)
                .map(|j| {
                    let xi = mu + j as f64 / n as f64 * (offs[i][j].m - mu);
                    self.net.point(i, xi) + self.net.normals[i] * state.rho[i][j]
                })
                .collect()
        })
    }

    /// Node geometry on every node of every branch.
    pub fn geometry(
        &self,
        state: &GraphState,
        offs: &[Vec<BoundaryOffset>; 3],
    ) -> Result<[Vec<NodeGeometry>; 3]> {
        let n = state.n();
        let mut out: [Vec<NodeGeometry>; 3] = Default::default();
        for i in 0..3 {
            let h = self.h(i, n);
            let (d1, d2) = grid_derivatives(&state.rho[i], h);
            out[i] = (0..=n)
                .map(|j| self.node_geometry(i, j as f64 * h, d1[j], d2[j], state.mu[i], &offs[i][j]))
                .collect::<Result<_>>()?;
        }
        Ok(out)
    }

    pub fn coefficients(&self, state: &GraphState) -> Result<Coefficients> {
        let offs = self.offsets(state, None)?;
        self.coefficients_with(state, &offs, DEFAULT_DET_M_FLOOR)
    }

    pub fn coefficients_with(
        &self,
        state: &GraphState,
        offs: &[Vec<BoundaryOffset>; 3],
        det_floor: f64,
    ) -> Result<Coefficients> {
        let geo = self.geometry(state, offs)?;
        let pick = |f: fn(&NodeGeometry) -> f64| geo.clone().map(|g| g.iter().map(f).collect::<Vec<_>>());
        let kappa = pick(|g| g.kappa);
        let l = pick(|g| g.l);
        let lambda = pick(|g| g.lambda);
        let a = pick(|g| g.a);
        let j = pick(|g| g.j);
        let q = self.net.q.q;
        let lam0 = Matrix3::from_diagonal(&Vector3::new(lambda[0][0], lambda[1][0], lambda[2][0]));
        let m = Matrix3::identity() - lam0 * q;
        let det_m = m.determinant();
        if !(det_m > det_floor) {
            return Err(Error::MatrixMNotInvertible(det_m));
        }
        let minv = m.try_inverse().ok_or(Error::MatrixMNotInvertible(det_m))?;
        let a1 = q * minv * Matrix3::from_diagonal(&Vector3::new(a[0][0], a[1][0], a[2][0]));
        let lk0 = Vector3::new(l[0][0] * kappa[0][0], l[1][0] * kappa[1][0], l[2][0] * kappa[2][0]);
        let mt = q * minv * lk0;
        let mu_t = [mt[0], mt[1], mt[2]];
        let rhs = [0, 1, 2].map(|i| {
            (0..kappa[i].len())
                .map(|k| l[i][k] * kappa[i][k] + lambda[i][k] * mu_t[i])
                .collect()
        });
        Ok(Coefficients {
            kappa,
            l,
            lambda,
            a,
            j,
            m,
            det_m,
            a1,
            mu_t,
            rhs,
        })
    }

    /// `Phi_sigma(0)` of branch `i` from its junction value and slope.
    fn start_tangent(&self, i: usize, rho0: f64, rho_s0: f64, mu: f64, guess: Option<f64>) -> Result<Point> {
        let b = self.boundary_offset(i, rho0, guess)?;
        let l = self.net.lengths[i];
        Ok(self.net.tangents[i] * ((b.m - mu) / l) + self.net.normals[i] * rho_s0)
    }

    /// `(g12, g13)` from junction values and slopes.
    pub fn junction_residuals_raw(
        &self,
        rho0: [f64; 3],
        rho_s0: [f64; 3],
        mu: [f64; 3],
        guess: Option<[f64; 3]>,
    ) -> Result<(f64, f64)> {
        let mut p = [Point::zeros(); 3];
        for i in 0..3 {
            p[i] = self.start_tangent(i, rho0[i], rho_s0[i], mu[i], guess.map(|g| g[i]))?;
        }
        let c = self.net.angles.cos;
        let j = p.map(|v| v.norm());
        Ok((
            p[0].dot(&p[1]) - j[0] * j[1] * c[2],
            p[2].dot(&p[0]) - j[2] * j[0] * c[1],
        ))
    }

    pub fn junction_angle_residuals(&self, state: &GraphState) -> Result<(f64, f64)> {
        let n = state.n();
        let rs = [0, 1, 2].map(|i| slope_start(&state.rho[i], self.h(i, n)));
        self.junction_residuals_raw(state.rho0(), rs, state.mu, None)
    }

    /// Perpendicularity defect at the outer end from the end value and slope,
    /// `-(R Phi_sigma, grad psi(Phi)) / |grad psi(Phi_*)|`. Its linearization
    /// about the reference state is `rho_sigma + h rho`.
    pub fn outer_residual_raw(&self, i: usize, rho_n: f64, rho_sn: f64, mu: f64, guess: Option<f64>) -> Result<f64> {
        let b = self.boundary_offset(i, rho_n, guess)?;
        let l = self.net.lengths[i];
        let (t, nv) = (self.net.tangents[i], self.net.normals[i]);
        let phi_s = t * ((b.m - mu) / l + b.dm * rho_sn) + nv * rho_sn;
        let x = self.net.point(i, b.m) + nv * rho_n;
        let g = self.domain.eval(&x).grad;
        let g_ref = self.domain.eval(&self.net.endpoints[i]).grad.norm();
        Ok(-rotate(phi_s).dot(&g) / g_ref)
    }

    pub fn outer_bc_residual(&self, state: &GraphState, i: usize) -> Result<f64> {
        let n = state.n();
        let r = &state.rho[i];
        self.outer_residual_raw(i, r[n], slope_end(r, self.h(i, n)), state.mu[i], None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn disk_net() -> (StationaryNetwork, ImplicitDomain) {
        let dom = ImplicitDomain::unit_disk();
        let net = StationaryNetwork::on_domain(&dom, SurfaceTensions::uniform(), Point::zeros(), 0.3).unwrap();
        (net, dom)
    }

    fn half_plane_net() -> (StationaryNetwork, ImplicitDomain) {
        // psi = x - 1: branch 1 along +x meets a straight wall perpendicularly.
        let dom = ImplicitDomain::polynomial(vec![(1, 0, 1.0), (0, 0, -1.0)], [-3.0, 3.0, -3.0, 3.0]);
        let net = StationaryNetwork::from_lines(SurfaceTensions::uniform(), Point::zeros(), 0.0, [1.0; 3], [0.0; 3]);
        (net, dom)
    }

    #[test]
    fn disk_network_lengths_and_curvature() {
        let (net, dom) = disk_net();
        for i in 0..3 {
            assert!((net.lengths[i] - 1.0).abs() < 1e-14);
            assert!((net.curvatures[i] + 1.0).abs() < 1e-12);
        }
        assert!(net.check(&dom).max() < 1e-12);
    }

    #[test]
    fn mu_boundary_on_disk() {
        let (net, dom) = disk_net();
        let p = Parameterization::new(&net, &dom);
        assert_eq!(p.mu_boundary(0, 0.0).unwrap(), 1.0);
        assert!((p.mu_boundary(1, 0.1).unwrap() - 0.99f64.sqrt()).abs() < 1e-14);
        // second difference returns the boundary curvature
        let q = 1e-3;
        let d2 = (p.mu_boundary(0, q).unwrap() + p.mu_boundary(0, -q).unwrap() - 2.0) / (q * q);
        assert!((d2 - net.curvatures[0]).abs() < 1e-3, "{d2}");
        let b = p.boundary_offset(2, 0.2, None).unwrap();
        let exact = (1.0f64 - 0.04).sqrt();
        assert!((b.m - exact).abs() < 1e-14);
        assert!((b.dm + 0.2 / exact).abs() < 1e-12);
        assert!((b.ddm + 1.0 / exact.powi(3)).abs() < 1e-12);
        assert!(matches!(p.mu_boundary(0, 1.5), Err(Error::OffsetMissesBoundary { .. })));
    }

    fn fd_psi(p: &Parameterization, i: usize, s: f64, q: f64, mu: f64) -> PsiDerivatives {
        let e = 1e-5;
        let f = |s: f64, q: f64, mu: f64| p.psi_map(i, s, q, mu).unwrap();
        let d_s = |s: f64, q: f64, mu: f64| (f(s + e, q, mu) - f(s - e, q, mu)) / (2.0 * e);
        let d_q = |s: f64, q: f64, mu: f64| (f(s, q + e, mu) - f(s, q - e, mu)) / (2.0 * e);
        let d_mu = |s: f64, q: f64, mu: f64| (f(s, q, mu + e) - f(s, q, mu - e)) / (2.0 * e);
        let e2 = 1e-4;
        let d_ss = |s: f64, q: f64, mu: f64| (f(s + e2, q, mu) - 2.0 * f(s, q, mu) + f(s - e2, q, mu)) / (e2 * e2);
        PsiDerivatives {
            s: d_s(s, q, mu),
            q: d_q(s, q, mu),
            mu: d_mu(s, q, mu),
            ss: d_ss(s, q, mu),
            sq: (d_s(s, q + e2, mu) - d_s(s, q - e2, mu)) / (2.0 * e2),
            smu: (d_s(s, q, mu + e2) - d_s(s, q, mu - e2)) / (2.0 * e2),
            qq: (f(s, q + e2, mu) - 2.0 * f(s, q, mu) + f(s, q - e2, mu)) / (e2 * e2),
            ssq: (d_ss(s, q + e2, mu) - d_ss(s, q - e2, mu)) / (2.0 * e2),
            ssmu: (d_ss(s, q, mu + e2) - d_ss(s, q, mu - e2)) / (2.0 * e2),
        }
    }

    #[test]
    fn psi_identities_at_reference() {
        let (net, dom) = disk_net();
        let p = Parameterization::new(&net, &dom);
        for i in 0..3 {
            let (t, l) = (net.tangents[i], net.lengths[i]);
            for s in [0.0, 0.3, 0.8] {
                assert!((p.psi_map(i, s, 0.0, 0.0).unwrap() - net.point(i, s)).norm() < 1e-15);
                let a = p.psi_derivatives(i, s, 0.0, 0.0).unwrap();
                assert!((a.s - t).norm() < 1e-15);
                assert!((a.q - net.normals[i]).norm() < 1e-15);
                assert!((a.mu - t * (1.0 - s / l)).norm() < 1e-15);
                assert!(a.sq.norm() < 1e-15 && a.ss.norm() == 0.0);
                assert!((a.smu + t / l).norm() < 1e-15);
                assert!(a.ssq.norm() == 0.0 && a.ssmu.norm() == 0.0);
            }
        }
    }

    #[test]
    fn psi_derivatives_match_finite_differences() {
        let (net, dom) = disk_net();
        let p = Parameterization::new(&net, &dom);
        for (s, q, mu) in [(0.4, 0.0, 0.0), (0.7, 0.05, -0.02), (0.2, -0.1, 0.03)] {
            let a = p.psi_derivatives(1, s, q, mu).unwrap();
            let f = fd_psi(&p, 1, s, q, mu);
            for (x, y, tol) in [
                (a.s, f.s, 1e-9),
                (a.q, f.q, 1e-9),
                (a.mu, f.mu, 1e-9),
                (a.ss, f.ss, 1e-6),
                (a.sq, f.sq, 1e-7),
                (a.smu, f.smu, 1e-7),
                (a.qq, f.qq, 1e-6),
                (a.ssq, f.ssq, 1e-3),
                (a.ssmu, f.ssmu, 1e-3),
            ] {
                assert!((x - y).norm() < tol, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn metric_and_curvature_reductions() {
        let (net, dom) = disk_net();
        let p = Parameterization::new(&net, &dom);
        assert_eq!(p.metric_j(0, 0.0, 0.0, 0.0, 0.5).unwrap(), 1.0);
        let eps = 1e-6;
        let dj = (p.metric_j(0, 0.0, 0.0, eps, 0.5).unwrap() - 1.0) / eps;
        assert!((dj + 1.0 / net.lengths[0]).abs() < 1e-6);
        assert_eq!(p.curvature_kappa(0, 0.0, 0.0, 0.0, 0.0, 0.5).unwrap(), 0.0);

        let (net, dom) = half_plane_net();
        let p = Parameterization::new(&net, &dom);
        for (rs, rss) in [(0.3_f64, 1.2), (-0.5, 0.7)] {
            let j = p.metric_j(0, 0.1, rs, 0.0, 0.4).unwrap();
            assert!((j - (1.0 + rs * rs).sqrt()).abs() < 1e-14);
            let k = p.curvature_kappa(0, 0.1, rs, rss, 0.0, 0.4).unwrap();
            assert!((k - rss / (1.0 + rs * rs).powf(1.5)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_state_coefficients() {
        let (net, dom) = disk_net();
        let p = Parameterization::new(&net, &dom);
        let c = p.coefficients(&GraphState::zero(16)).unwrap();
        assert!((c.det_m - 1.0).abs() < 1e-12);
        for i in 0..3 {
            assert!(c.lambda[i].iter().all(|v| v.abs() < 1e-12));
            assert!(c.a[i].iter().all(|v| (v - 1.0).abs() < 1e-12));
            assert!(c.kappa[i].iter().all(|v| v.abs() < 1e-12));
        }
        let z = GraphState::zero(16);
        let (g12, g13) = p.junction_angle_residuals(&z).unwrap();
        assert!(g12.abs() < 1e-15 && g13.abs() < 1e-15);
        for i in 0..3 {
            assert!(p.outer_bc_residual(&z, i).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn junction_residual_linearization() {
        let (net, dom) = disk_net();
        let p = Parameterization::new(&net, &dom);
        let s = net.angles.sin;
        let eps = 1e-6;
        let (g12, g13) = p.junction_residuals_raw([0.0; 3], [eps, 0.0, 0.0], [0.0; 3], None).unwrap();
        assert!((g12 / eps - s[2]).abs() < 1e-5);
        assert!((g13 / eps + s[1]).abs() < 1e-5);
        let (g12, g13) = p.junction_residuals_raw([0.0; 3], [0.0, eps, -2.0 * eps], [0.0; 3], None).unwrap();
        assert!((g12 / eps + s[2]).abs() < 1e-5);
        assert!((g13 / eps + 2.0 * s[1]).abs() < 1e-5);
        // offsets in mu do not change the angles
        let (g12, g13) = p.junction_residuals_raw([0.0; 3], [0.0; 3], [0.01, -0.02, 0.03], None).unwrap();
        assert!(g12.abs() < 1e-15 && g13.abs() < 1e-15);
    }

    #[test]
    fn outer_residual_linearization() {
        let (net, dom) = disk_net();
        let p = Parameterization::new(&net, &dom);
        let eps = 1e-6;
        for i in 0..3 {
            let r = p.outer_residual_raw(i, eps, 0.0, 0.0, None).unwrap();
            assert!((r / eps - net.curvatures[i]).abs() < 1e-5, "{r}");
            let r = p.outer_residual_raw(i, 0.0, eps, 0.0, None).unwrap();
            assert!((r / eps - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn curve_from_graph_keeps_junction_and_boundary() {
        let (net, dom) = disk_net();
        let p = Parameterization::new(&net, &dom);
        let n = 20;
        let mut st = GraphState::zero(n);
        for i in 0..3 {
            for j in 0..=n {
                let s = j as f64 / n as f64;
                st.rho[i][j] = 0.02 * ((i + 1) as f64 * PI * s).cos() + 0.01 * i as f64;
            }
        }
        let g = net.tensions.gamma();
        let shift = net.tensions.weighted_sum(st.rho0()) / g.iter().map(|x| x * x).sum::<f64>();
        for i in 0..3 {
            for v in st.rho[i].iter_mut() {
                *v -= shift * g[i];
            }
        }
        st.mu = net.q.apply(st.rho0());
        let c = p.curve_from_graph(&st).unwrap();
        assert!((c[0][0] - c[1][0]).norm() < 1e-12 && (c[0][0] - c[2][0]).norm() < 1e-12);
        for i in 0..3 {
            assert!(dom.psi(&c[i][n]).abs() < 1e-12);
        }
        let zero = p.curve_from_graph(&GraphState::zero(n)).unwrap();
        assert!((zero[1][n] - net.endpoints[1]).norm() < 1e-15);
    }
}
