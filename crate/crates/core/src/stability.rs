//! Linearized stability of a stationary network.
//!
//! The time-independent problem is `phi'' = lambda phi` on every branch with
//! `sum gamma phi(0) = 0`, equal slopes at the junction and
//! `phi' + h phi = 0` at the outer ends. Its weak form is the quadratic form
//! `I[phi] = sum gamma (int phi'^2 + h phi(l)^2)` against the mass
//! `sum gamma int phi^2`, restricted to the constraint plane. Equal slopes are
//! the natural condition of that restricted form and are not imposed.

use nalgebra::{DMatrix, Matrix2, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::param::StationaryNetwork;
use crate::tension::SurfaceTensions;

/// Piecewise-linear finite element forms on `n` elements per branch.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteForms {
    pub n: usize,
    pub gamma: [f64; 3],
    pub lengths: [f64; 3],
    pub curvatures: [f64; 3],
}

impl DiscreteForms {
    pub fn new(tensions: &SurfaceTensions, lengths: [f64; 3], curvatures: [f64; 3], n: usize) -> Self {
        Self {
            n,
            gamma: tensions.gamma(),
            lengths,
            curvatures,
        }
    }

    pub fn dim(&self) -> usize {
        3 * (self.n + 1)
    }

    fn step(&self, i: usize) -> f64 {
        self.lengths[i] / self.n as f64
    }

    // (diag, off) of K - s B on branch i; the end node gets the Robin term.
    fn branch_entries(&self, i: usize, s: f64, j: usize) -> (f64, f64) {
        let (g, h) = (self.gamma[i], self.step(i));
        let end = j == 0 || j == self.n;
        let kd = if end { g / h } else { 2.0 * g / h };
        let bd = if end { g * h / 3.0 } else { 2.0 * g * h / 3.0 };
        let mut d = kd - s * bd;
        if j == self.n {
            d += g * self.curvatures[i];
        }
        let off = -g / h - s * g * h / 6.0;
        (d, off)
    }

    /// Stiffness of the full (unconstrained) nodal basis, ordered branch by branch.
    pub fn stiffness_dense(&self) -> DMatrix<f64> {
        self.pencil_dense(0.0)
    }

    pub fn mass_dense(&self) -> DMatrix<f64> {
        self.pencil_dense(-1.0) - self.stiffness_dense()
    }

    /// `K - s B`.
    pub fn pencil_dense(&self, s: f64) -> DMatrix<f64> {
        let m = self.n + 1;
        let mut a = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..3 {
            for j in 0..m {
                let (d, o) = self.branch_entries(i, s, j);
                a[(i * m + j, i * m + j)] = d;
                if j < self.n {
                    a[(i * m + j, i * m + j + 1)] = o;
                    a[(i * m + j + 1, i * m + j)] = o;
                }
            }
        }
        a
    }

    /// Row encoding `sum gamma phi(0) = 0`.
    pub fn constraint_row(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim()];
        for i in 0..3 {
            c[i * (self.n + 1)] = self.gamma[i];
        }
        c
    }

    fn quad(&self, phi: &[Vec<f64>; 3], s: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..=self.n {
                let (d, o) = self.branch_entries(i, s, j);
                acc += d * phi[i][j] * phi[i][j];
                if j < self.n {
                    acc += 2.0 * o * phi[i][j] * phi[i][j + 1];
                }
            }
        }
        acc
    }

    /// Discrete `I[phi]`.
    pub fn energy(&self, phi: &[Vec<f64>; 3]) -> f64 {
        self.quad(phi, 0.0)
    }

    /// Discrete `sum gamma int phi^2`.
    pub fn mass(&self, phi: &[Vec<f64>; 3]) -> f64 {
        self.quad(phi, -1.0) - self.quad(phi, 0.0)
    }
}

pub fn assemble_forms(net: &StationaryNetwork, n: usize) -> DiscreteForms {
    DiscreteForms::new(&net.tensions, net.lengths, net.curvatures, n)
}

// Orthonormal basis of the plane orthogonal to gamma.
fn constraint_basis(gamma: [f64; 3]) -> [Vector2<f64>; 3] {
    let g = Vector3::from(gamma).normalize();
    let trial = if g.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u1 = (trial - g * g.dot(&trial)).normalize();
    let u2 = g.cross(&u1);
    [0, 1, 2].map(|i| Vector2::new(u1[i], u2[i]))
}

/// The forms restricted to the constraint plane in coordinates
/// `(hub a in R^2, interior and end nodes of each branch)`, with
/// `phi_i(0) = U_i . a`. The matrix is an arrow: three tridiagonal chains
/// coupled through a 2x2 hub.
struct Reduced<'a> {
    forms: &'a DiscreteForms,
    u: [Vector2<f64>; 3],
}

struct Factor {
    piv: [Vec<f64>; 3],
    hub: Matrix2<f64>,
    negatives: usize,
}

impl<'a> Reduced<'a> {
    fn new(forms: &'a DiscreteForms) -> Self {
        Self {
            forms,
            u: constraint_basis(forms.gamma),
        }
    }

    fn n(&self) -> usize {
        self.forms.n
    }

    // Symmetric elimination of K - s B, chains eliminated from the outer end.
    fn factor(&self, s: f64) -> Factor {
        let n = self.n();
        let mut hub = Matrix2::zeros();
        let mut negatives = 0;
        let mut piv: [Vec<f64>; 3] = Default::default();
        for i in 0..3 {
            let mut p = vec![0.0; n + 1];
            p[n] = self.forms.branch_entries(i, s, n).0;
            for j in (1..n).rev() {
                let (d, e) = self.forms.branch_entries(i, s, j);
                p[j] = d - e * e / p[j + 1];
            }
            for v in p.iter_mut().skip(1) {
                if *v == 0.0 {
                    *v = -f64::MIN_POSITIVE;
                }
                if *v < 0.0 {
                    negatives += 1;
                }
            }
            let (d0, c) = self.forms.branch_entries(i, s, 0);
            let uu = self.u[i] * self.u[i].transpose();
            hub += uu * (d0 - c * c / p[1]);
            piv[i] = p;
        }
        let tr = hub.trace();
        let det = hub.determinant();
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        negatives += [0.5 * tr - disc, 0.5 * tr + disc].iter().filter(|&&e| e < 0.0).count();
        Factor { piv, hub, negatives }
    }

    fn solve(&self, f: &Factor, s: f64, r: &(Vector2<f64>, [Vec<f64>; 3])) -> (Vector2<f64>, [Vec<f64>; 3]) {
        let n = self.n();
        let mut y: [Vec<f64>; 3] = r.1.clone();
        let mut rh = r.0;
        let mut coup = [0.0; 3];
        for i in 0..3 {
            for j in (1..n).rev() {
                let e = self.forms.branch_entries(i, s, j).1;
                y[i][j] -= e * y[i][j + 1] / f.piv[i][j + 1];
            }
            coup[i] = self.forms.branch_entries(i, s, 0).1;
            rh -= self.u[i] * (coup[i] * y[i][1] / f.piv[i][1]);
        }
        let a = f.hub.lu().solve(&rh).unwrap_or_else(Vector2::zeros);
        let mut x: [Vec<f64>; 3] = Default::default();
        for i in 0..3 {
            let mut xi = vec![0.0; n + 1];
            xi[0] = self.u[i].dot(&a);
            xi[1] = (y[i][1] - coup[i] * xi[0]) / f.piv[i][1];
            for j in 1..n {
                let e = self.forms.branch_entries(i, s, j).1;
                xi[j + 1] = (y[i][j + 1] - e * xi[j]) / f.piv[i][j + 1];
            }
            x[i] = xi;
        }
        (a, x)
    }

    // Reduced mass times a vector given by its hub and full nodal values.
    fn mass_apply(&self, phi: &[Vec<f64>; 3]) -> (Vector2<f64>, [Vec<f64>; 3]) {
        let n = self.n();
        let mut hub = Vector2::zeros();
        let mut out: [Vec<f64>; 3] = Default::default();
        for i in 0..3 {
            let mut o = vec![0.0; n + 1];
            for j in 0..=n {
                let (d, off) = self.forms.branch_entries(i, -1.0, j);
                let (dk, offk) = self.forms.branch_entries(i, 0.0, j);
                let (bd, bo) = (d - dk, off - offk);
                o[j] += bd * phi[i][j];
                if j < n {
                    o[j] += bo * phi[i][j + 1];
                    o[j + 1] += bo * phi[i][j];
                }
            }
            hub += self.u[i] * o[0];
            out[i] = o;
        }
        (hub, out)
    }

    fn count_below(&self, s: f64) -> usize {
        self.factor(s).negatives
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub lambda_max: f64,
    /// Nodal values per branch, scaled so the largest entry is `+1`.
    pub eigenfunction: [Vec<f64>; 3],
    /// `-I[phi] / sum gamma |phi|^2` at the eigenfunction.
    pub rayleigh: f64,
}

/// Largest eigenvalue of the constrained problem by inertia bisection on the
/// arrow-structured reduced pencil, followed by inverse iteration.
pub fn max_eigenvalue(net: &StationaryNetwork, n: usize) -> Result<SpectrumResult> {
    max_eigenvalue_of(&assemble_forms(net, n))
}

pub fn max_eigenvalue_of(forms: &DiscreteForms) -> Result<SpectrumResult> {
    if forms.n < 2 {
        return Err(Error::EigenSolveFailed("need at least two elements per branch".into()));
    }
    let red = Reduced::new(forms);
    let fail = |m: &str| Error::EigenSolveFailed(m.to_string());
    let mut hi = 1.0;
    while red.count_below(hi) == 0 {
        hi = 2.0 * hi + 1.0;
        if !hi.is_finite() || hi > 1e300 {
            return Err(fail("no upper bracket"));
        }
    }
    let mut lo = -1.0;
    while red.count_below(lo) > 0 {
        lo = 2.0 * lo - 1.0;
        if !lo.is_finite() || lo < -1e300 {
            return Err(fail("no lower bracket"));
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if red.count_below(mid) == 0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);

    // Inverse iteration just below the eigenvalue.
    let shift = mu - 1e-9 * mu.abs().max(1.0);
    let f = red.factor(shift);
    let n = forms.n;
    let mut phi: [Vec<f64>; 3] = [0, 1, 2].map(|i| {
        (0..=n)
            .map(|j| 1.0 + 0.1 * (i as f64 + 1.0) * (j as f64 / n as f64) + 0.01 * ((i * 7 + j * 3) % 5) as f64)
            .collect()
    });
    // start inside the constraint plane
    let g = forms.gamma;
    let c = (g[0] * phi[0][0] + g[1] * phi[1][0] + g[2] * phi[2][0]) / (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
    for i in 0..3 {
        phi[i][0] -= c * g[i];
    }
    for _ in 0..6 {
        let rhs = red.mass_apply(&phi);
        let (_, x) = red.solve(&f, shift, &rhs);
        let norm = forms.mass(&x).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(fail("inverse iteration broke down"));
        }
        phi = x.map(|v| v.into_iter().map(|e| e / norm).collect());
    }
    let rq = forms.energy(&phi) / forms.mass(&phi);
    if (rq - mu).abs() > 1e-8 * mu.abs().max(1.0) {
        return Err(fail(&format!("eigenvector does not match eigenvalue ({rq} vs {mu})")));
    }
    let (mut big, mut sign) = (0.0_f64, 1.0);
    for v in phi.iter().flat_map(|b| b.iter()) {
        if v.abs() > big {
            big = v.abs();
            sign = v.signum();
        }
    }
    let eigenfunction = phi.map(|v| v.into_iter().map(|e| sign * e / big).collect());
    Ok(SpectrumResult {
        lambda_max: -mu,
        eigenfunction,
        rayleigh: -rq,
    })
}

/// `I[phi] / sum gamma |phi|^2` for an admissible nodal function.
pub fn rayleigh_quotient(net: &StationaryNetwork, phi: &[Vec<f64>; 3]) -> Result<f64> {
    let n = phi[0].len() - 1;
    let forms = assemble_forms(net, n);
    let c = net.tensions.weighted_sum([phi[0][0], phi[1][0], phi[2][0]]);
    let scale = phi.iter().flat_map(|b| b.iter()).fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::ZeroFunction);
    }
    if c.abs() > 1e-10 * scale {
        return Err(Error::ConstraintViolated(c));
    }
    Ok(forms.energy(phi) / forms.mass(phi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
}

/// Which sign pattern of the endpoint curvatures decided the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriterionCase {
    AllPositive,
    OneNonPositive,
    SeveralNonPositive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    /// `sum gamma_i (1 + l_i h_i) h_j h_k`, evaluated in every case.
    pub criterion_value: f64,
    pub case: CriterionCase,
    pub marginal_band: f64,
}

pub const MARGINAL_BAND: f64 = 1e-10;

pub fn stability_criterion(l: [f64; 3], h: [f64; 3], tensions: &SurfaceTensions) -> StabilityVerdict {
    stability_criterion_with_band(l, h, tensions, MARGINAL_BAND)
}

pub fn stability_criterion_with_band(
    l: [f64; 3],
    h: [f64; 3],
    tensions: &SurfaceTensions,
    band: f64,
) -> StabilityVerdict {
    let g = tensions.gamma();
    let value: f64 = (0..3)
        .map(|i| g[i] * (1.0 + l[i] * h[i]) * h[(i + 1) % 3] * h[(i + 2) % 3])
        .sum();
    let non_positive = h.iter().filter(|&&x| x <= 0.0).count();
    let (verdict, case) = match non_positive {
        0 => (Verdict::Stable, CriterionCase::AllPositive),
        1 => {
            let v = if value > band {
                Verdict::Stable
            } else if value < -band {
                Verdict::Unstable
            } else {
                Verdict::Marginal
            };
            (v, CriterionCase::OneNonPositive)
        }
        _ => (Verdict::Unstable, CriterionCase::SeveralNonPositive),
    };
    StabilityVerdict {
        verdict,
        criterion_value: value,
        case,
        marginal_band: band,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Point;
    use nalgebra::SymmetricEigen;

    fn net(l: [f64; 3], h: [f64; 3], g: [f64; 3]) -> StationaryNetwork {
        StationaryNetwork::from_lines(SurfaceTensions::new(g).unwrap(), Point::zeros(), 0.0, l, h)
    }

    #[test]
    fn form_examples() {
        let f = DiscreteForms::new(&SurfaceTensions::uniform(), [1.0; 3], [0.0; 3], 1);
        let consts = [vec![1.0, 1.0], vec![-2.0, -2.0], vec![1.0, 1.0]];
        assert_eq!(f.energy(&consts), 0.0);
        let lin = [vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0]];
        assert!((f.energy(&lin) - 3.0).abs() < 1e-14);
        let f = DiscreteForms::new(&SurfaceTensions::uniform(), [1.0; 3], [2.0, 0.0, 0.0], 1);
        let tip = [vec![0.0, 3.0], vec![0.0, 0.0], vec![0.0, 0.0]];
        // gradient part 9 plus Robin part 18
        assert!((f.energy(&tip) - 27.0).abs() < 1e-14);
        let f = DiscreteForms::new(&SurfaceTensions::uniform(), [1.0; 3], [0.0; 3], 10);
        let lin: [Vec<f64>; 3] = [0, 1, 2].map(|_| (0..=10).map(|j| j as f64 / 10.0).collect());
        assert!((f.energy(&lin) - 3.0).abs() < 1e-12);
        assert!((f.mass(&lin) - 1.0).abs() < 1e-12);
        assert_eq!(f.constraint_row()[11], 1.0);
    }

    #[test]
    fn dense_matrices_match_quadratic_forms() {
        let f = DiscreteForms::new(&SurfaceTensions::new([1.0, 1.3, 0.8]).unwrap(), [1.0, 0.7, 1.5], [0.5, -0.2, 1.0], 5);
        let (k, b) = (f.stiffness_dense(), f.mass_dense());
        let phi: [Vec<f64>; 3] = [0, 1, 2].map(|i| (0..=5).map(|j| ((i * 6 + j) as f64).sin()).collect());
        let v = nalgebra::DVector::from_iterator(18, phi.iter().flat_map(|b| b.iter().copied()));
        assert!(((v.transpose() * &k * &v)[0] - f.energy(&phi)).abs() < 1e-12);
        assert!(((v.transpose() * &b * &v)[0] - f.mass(&phi)).abs() < 1e-12);
    }

    // Independent dense oracle: project onto an orthonormal null-space basis
    // of the constraint row and solve the reduced generalized problem.
    fn dense_lambda_max(f: &DiscreteForms) -> f64 {
        let dim = f.dim();
        let c = nalgebra::DVector::from_vec(f.constraint_row()).normalize();
        let mut basis = Vec::new();
        for e in 0..dim {
            let mut v = nalgebra::DVector::zeros(dim);
            v[e] = 1.0;
            v -= &c * c.dot(&v);
            for b in &basis {
                let b: &nalgebra::DVector<f64> = b;
                v -= b * b.dot(&v);
            }
            if v.norm() > 1e-8 {
                basis.push(v.normalize());
            }
        }
        let p = DMatrix::from_columns(&basis);
        let k = p.transpose() * f.stiffness_dense() * &p;
        let b = p.transpose() * f.mass_dense() * &p;
        let l = b.cholesky().unwrap().l();
        let li = l.clone().try_inverse().unwrap();
        let c = &li * k * li.transpose();
        let e = SymmetricEigen::new(c);
        -e.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn bisection_matches_dense_solve() {
        for (l, h, g) in [
            ([1.0; 3], [1.0; 3], [1.0; 3]),
            ([1.0, 0.6, 1.8], [-0.5, 1.2, 0.3], [1.0, 1.2, 0.9]),
            ([0.5, 1.0, 2.0], [-0.3, -0.2, 2.0], [1.0, 1.0, 1.0]),
        ] {
            let f = assemble_forms(&net(l, h, g), 24);
            let r = max_eigenvalue_of(&f).unwrap();
            let d = dense_lambda_max(&f);
            assert!((r.lambda_max - d).abs() < 1e-10, "{} vs {d}", r.lambda_max);
            assert!((r.lambda_max - r.rayleigh).abs() < 1e-10);
            let g0 = net(l, h, g).tensions.weighted_sum([r.eigenfunction[0][0], r.eigenfunction[1][0], r.eigenfunction[2][0]]);
            assert!(g0.abs() < 1e-10);
        }
    }

    #[test]
    fn zero_curvature_gives_zero_eigenvalue() {
        let r = max_eigenvalue(&net([0.7, 1.0, 1.9], [0.0; 3], [1.0, 1.1, 0.8]), 50).unwrap();
        assert!(r.lambda_max.abs() < 1e-8);
        // the eigenfunction is constant on every branch
        for b in &r.eigenfunction {
            let spread = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - b.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(spread < 1e-6);
        }
    }

    #[test]
    fn criterion_examples() {
        let t = SurfaceTensions::uniform();
        let v = stability_criterion([1.0; 3], [1.0; 3], &t);
        assert_eq!((v.verdict, v.case), (Verdict::Stable, CriterionCase::AllPositive));
        let v = stability_criterion([1.0; 3], [-0.5, 1.0, 1.0], &t);
        assert_eq!(v.verdict, Verdict::Unstable);
        assert!((v.criterion_value + 1.5).abs() < 1e-15);
        let v = stability_criterion([1.0; 3], [0.0, 1.0, 1.0], &t);
        assert_eq!((v.verdict, v.criterion_value), (Verdict::Stable, 1.0));
        let v = stability_criterion([1.0; 3], [-1.0, -1.0, 1.0], &t);
        assert_eq!((v.verdict, v.case), (Verdict::Unstable, CriterionCase::SeveralNonPositive));
        // 0.75 * 4 + 2 * (3 * -0.25 * 2)
        let v = stability_criterion([1.0; 3], [-0.25, 2.0, 2.0], &t);
        assert_eq!(v.criterion_value, 0.0);
        assert_eq!(v.verdict, Verdict::Marginal);
    }

    #[test]
    fn rayleigh_quotient_errors() {
        let nw = net([1.0; 3], [1.0; 3], [1.0; 3]);
        let z = [vec![0.0; 9], vec![0.0; 9], vec![0.0; 9]];
        assert_eq!(rayleigh_quotient(&nw, &z), Err(Error::ZeroFunction));
        let bad = [vec![1.0; 9], vec![0.0; 9], vec![0.0; 9]];
        assert!(matches!(rayleigh_quotient(&nw, &bad), Err(Error::ConstraintViolated(_))));
    }
}
