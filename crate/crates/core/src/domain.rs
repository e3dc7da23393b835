//! Level-set domains `{psi < 0}` with analytic first and second derivatives.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::rotate;

pub type Point = Vector2<f64>;

/// A circle used as a building block of perforated domains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Point, radius: f64) -> Self {
        Self { center, radius }
    }

    // |x - c|^2 / r^2 - 1 and its derivatives.
    fn factor(&self, x: &Point) -> (f64, Point, f64) {
        let r2 = self.radius * self.radius;
        let d = x - self.center;
        (d.norm_squared() / r2 - 1.0, d * (2.0 / r2), 2.0 / r2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Circle(Circle),
    Ellipse { center: Point, a: f64, b: f64 },
    /// `psi = sum c x^i y^j`.
    Polynomial(Vec<(u32, u32, f64)>),
    /// Disk minus disjoint circular holes, `psi` the signed product of the
    /// normalized circle functions.
    Perforated { outer: Circle, holes: Vec<Circle> },
}

/// `psi`, its gradient and Hessian at one point.
#[derive(Debug, Clone, Copy)]
pub struct LevelSetValue {
    pub psi: f64,
    pub grad: Point,
    pub hess: Matrix2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitDomain {
    shape: Shape,
    /// `[xmin, xmax, ymin, ymax]`, used to bound ray searches.
    bbox: [f64; 4],
}

impl ImplicitDomain {
    pub fn circle(center: Point, radius: f64) -> Self {
        let m = 1.05 * radius;
        Self {
            shape: Shape::Circle(Circle::new(center, radius)),
            bbox: [center.x - m, center.x + m, center.y - m, center.y + m],
        }
    }

    pub fn unit_disk() -> Self {
        Self::circle(Point::zeros(), 1.0)
    }

    pub fn ellipse(center: Point, a: f64, b: f64) -> Self {
        Self {
            shape: Shape::Ellipse { center, a, b },
            bbox: [
                center.x - 1.05 * a,
                center.x + 1.05 * a,
                center.y - 1.05 * b,
                center.y + 1.05 * b,
            ],
        }
    }

    pub fn polynomial(terms: Vec<(u32, u32, f64)>, bbox: [f64; 4]) -> Self {
        Self {
            shape: Shape::Polynomial(terms),
            bbox,
        }
    }

    pub fn perforated(outer: Circle, holes: Vec<Circle>) -> Self {
        let m = 1.05 * outer.radius;
        let c = outer.center;
        Self {
            shape: Shape::Perforated { outer, holes },
            bbox: [c.x - m, c.x + m, c.y - m, c.y + m],
        }
    }

    /// Expands a perforated domain into monomials. The zero set is unchanged.
    pub fn expanded(&self) -> Option<Self> {
        let Shape::Perforated { outer, holes } = &self.shape else {
            return None;
        };
        let mut poly = circle_poly(outer);
        for h in holes {
            poly = poly_mul(&poly, &circle_poly(h));
        }
        let terms = poly
            .into_iter()
            .filter(|t| t.2 != 0.0)
            .collect();
        Some(Self::polynomial(terms, self.bbox))
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn bbox(&self) -> [f64; 4] {
        self.bbox
    }

    pub fn with_bbox(mut self, bbox: [f64; 4]) -> Self {
        self.bbox = bbox;
        self
    }

    pub fn psi(&self, x: &Point) -> f64 {
        match &self.shape {
            Shape::Circle(c) => c.factor(x).0,
            Shape::Ellipse { center, a, b } => {
                let d = x - center;
                (d.x / a).powi(2) + (d.y / b).powi(2) - 1.0
            }
            Shape::Polynomial(terms) => terms
                .iter()
                .map(|&(i, j, c)| c * x.x.powi(i as i32) * x.y.powi(j as i32))
                .sum(),
            Shape::Perforated { outer, holes } => {
                let mut p = outer.factor(x).0;
                for h in holes {
                    p *= h.factor(x).0;
                }
                p
            }
        }
    }

    pub fn eval(&self, x: &Point) -> LevelSetValue {
        match &self.shape {
            Shape::Circle(c) => {
                let (psi, grad, h) = c.factor(x);
                LevelSetValue {
                    psi,
                    grad,
                    hess: Matrix2::identity() * h,
                }
            }
            Shape::Ellipse { center, a, b } => {
                let d = x - center;
                let (ia2, ib2) = (1.0 / (a * a), 1.0 / (b * b));
                LevelSetValue {
                    psi: d.x * d.x * ia2 + d.y * d.y * ib2 - 1.0,
                    grad: Point::new(2.0 * d.x * ia2, 2.0 * d.y * ib2),
                    hess: Matrix2::new(2.0 * ia2, 0.0, 0.0, 2.0 * ib2),
                }
            }
            Shape::Polynomial(terms) => eval_poly(terms, x),
            Shape::Perforated { outer, holes } => {
                let mut f = Vec::with_capacity(holes.len() + 1);
                f.push(outer.factor(x));
                for h in holes {
                    f.push(h.factor(x));
                }
                eval_product(&f)
            }
        }
    }

    /// Curvature of the boundary at `x`, `-(1/|grad psi|) (D^2 psi t, t)` with
    /// `t` the unit tangent of the level line. A disk of radius `R` gives `-1/R`.
    pub fn boundary_curvature(&self, x: &Point) -> Result<f64> {
        let v = self.eval(x);
        let g = v.grad.norm();
        if !(g > 1e-12) {
            return Err(Error::SingularGradient(x.x, x.y));
        }
        if (v.psi / g).abs() > 1e-8 {
            return Err(Error::NotOnBoundary(x.x, x.y, v.psi));
        }
        let t = rotate(v.grad / g);
        Ok(-(t.dot(&(v.hess * t))) / g)
    }

    /// First exit of the ray `origin + t dir`, `t > 0`, from the domain.
    pub fn boundary_hit(&self, origin: &Point, dir: &Point) -> Result<(Point, f64)> {
        let dir = dir.normalize();
        let t_max = ray_box_exit(origin, &dir, &self.bbox).ok_or(Error::NoIntersection)?;
        let [x0, x1, y0, y1] = self.bbox;
        let step = (x1 - x0).min(y1 - y0) / 2000.0;
        let f = |t: f64| self.psi(&(origin + dir * t));
        let mut lo = 0.0;
        let mut f_lo = f(lo);
        if f_lo >= 0.0 {
            return Err(Error::NoIntersection);
        }
        loop {
            let hi = (lo + step).min(t_max);
            let f_hi = f(hi);
            if f_hi >= 0.0 {
                let t = refine_root(&f, lo, hi, f_lo, f_hi);
                return Ok((origin + dir * t, t));
            }
            if hi >= t_max {
                return Err(Error::NoIntersection);
            }
            lo = hi;
            f_lo = f_hi;
        }
    }

    /// Root of `psi(base + t dir)` near `guess`, with the sign of `psi` changing
    /// from negative to positive. Returns `None` if no such root is found
    /// within `reach` of the guess.
    pub fn line_root(&self, base: &Point, dir: &Point, guess: f64, reach: f64) -> Option<f64> {
        let f = |t: f64| {
            let v = self.eval(&(base + dir * t));
            (v.psi, v.grad.dot(dir))
        };
        // Newton from the guess; accept only if the slope stays positive.
        let mut t = guess;
        for _ in 0..30 {
            let (v, d) = f(t);
            if !(d > 0.0) {
                break;
            }
            let dt = v / d;
            t -= dt;
            if (t - guess).abs() > reach {
                break;
            }
            if dt.abs() <= 1e-15 * t.abs().max(1.0) {
                let (v, d) = f(t);
                if d > 0.0 && v.abs() < 1e-9 * d {
                    return Some(t);
                }
                break;
            }
        }
        // Bracket outward from the guess.
        let psi = |t: f64| self.psi(&(base + dir * t));
        let h = reach / 64.0;
        for k in 0..64 {
            let a = guess - (k as f64 + 1.0) * h;
            let b = guess + k as f64 * h;
            for (lo, hi) in [(b, b + h), (a, a + h)] {
                let (fl, fh) = (psi(lo), psi(hi));
                if fl < 0.0 && fh >= 0.0 {
                    return Some(refine_root(&psi, lo, hi, fl, fh));
                }
            }
        }
        None
    }
}

fn ray_box_exit(o: &Point, d: &Point, bbox: &[f64; 4]) -> Option<f64> {
    let mut t = f64::INFINITY;
    for (k, (lo, hi)) in [(bbox[0], bbox[1]), (bbox[2], bbox[3])].into_iter().enumerate() {
        let (p, v) = (o[k], d[k]);
        if p < lo || p > hi {
            return None;
        }
        if v > 0.0 {
            t = t.min((hi - p) / v);
        } else if v < 0.0 {
            t = t.min((lo - p) / v);
        }
    }
    t.is_finite().then_some(t)
}

/// Illinois-style regula falsi with a bisection safeguard; `f(lo) < 0 <= f(hi)`.
fn refine_root(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut fl: f64, mut fh: f64) -> f64 {
    let mut side = 0;
    for it in 0..200 {
        if fh == 0.0 {
            return hi;
        }
        let mut t = (lo * fh - hi * fl) / (fh - fl);
        if it % 4 == 3 || !(t > lo && t < hi) {
            t = 0.5 * (lo + hi);
        }
        if t <= lo || t >= hi {
            break;
        }
        let ft = f(t);
        if ft < 0.0 {
            lo = t;
            fl = ft;
            if side == -1 {
                fh *= 0.5;
            }
            side = -1;
        } else {
            hi = t;
            fh = ft;
            if side == 1 {
                fl *= 0.5;
            }
            side = 1;
        }
    }
    let (a, b) = (f(lo).abs(), f(hi).abs());
    if a < b {
        lo
    } else {
        hi
    }
}

fn eval_poly(terms: &[(u32, u32, f64)], x: &Point) -> LevelSetValue {
    let deg = terms.iter().map(|t| t.0.max(t.1)).max().unwrap_or(0) as usize;
    if deg >= 16 {
        return eval_poly_high(terms, x, deg);
    }
    let mut px = [1.0; 16];
    let mut py = [1.0; 16];
    poly_sums(terms, x, deg, &mut px, &mut py)
}

fn eval_poly_high(terms: &[(u32, u32, f64)], x: &Point, deg: usize) -> LevelSetValue {
    let mut px = vec![1.0; deg + 1];
    let mut py = vec![1.0; deg + 1];
    poly_sums(terms, x, deg, &mut px, &mut py)
}

fn poly_sums(terms: &[(u32, u32, f64)], x: &Point, deg: usize, px: &mut [f64], py: &mut [f64]) -> LevelSetValue {
    for k in 1..=deg {
        px[k] = px[k - 1] * x.x;
        py[k] = py[k - 1] * x.y;
    }
    // k * base^(k-1) and k (k-1) base^(k-2), zero below the power
    let d1 = |p: &[f64], k: usize| if k >= 1 { k as f64 * p[k - 1] } else { 0.0 };
    let d2 = |p: &[f64], k: usize| if k >= 2 { (k * (k - 1)) as f64 * p[k - 2] } else { 0.0 };
    let mut v = LevelSetValue {
        psi: 0.0,
        grad: Point::zeros(),
        hess: Matrix2::zeros(),
    };
    for &(i, j, c) in terms {
        let (i, j) = (i as usize, j as usize);
        let (xi, yj) = (px[i], py[j]);
        let (xi1, yj1) = (d1(px, i), d1(py, j));
        v.psi += c * xi * yj;
        v.grad.x += c * xi1 * yj;
        v.grad.y += c * xi * yj1;
        v.hess[(0, 0)] += c * d2(px, i) * yj;
        v.hess[(1, 1)] += c * xi * d2(py, j);
        v.hess[(0, 1)] += c * xi1 * yj1;
    }
    v.hess[(1, 0)] = v.hess[(0, 1)];
    v
}

// Product rule for prod f_k with isotropic Hessians s_k I.
fn eval_product(f: &[(f64, Point, f64)]) -> LevelSetValue {
    let k = f.len();
    let prod_except = |skip: &[usize]| -> f64 {
        (0..k)
            .filter(|m| !skip.contains(m))
            .map(|m| f[m].0)
            .product()
    };
    let mut v = LevelSetValue {
        psi: prod_except(&[]),
        grad: Point::zeros(),
        hess: Matrix2::zeros(),
    };
    for a in 0..k {
        let pa = prod_except(&[a]);
        v.grad += f[a].1 * pa;
        v.hess += Matrix2::identity() * (f[a].2 * pa);
        for b in 0..k {
            if b != a {
                v.hess += f[a].1 * f[b].1.transpose() * prod_except(&[a, b]);
            }
        }
    }
    v
}

fn circle_poly(c: &Circle) -> Vec<(u32, u32, f64)> {
    let r2 = c.radius * c.radius;
    let (a, b) = (c.center.x, c.center.y);
    vec![
        (2, 0, 1.0 / r2),
        (0, 2, 1.0 / r2),
        (1, 0, -2.0 * a / r2),
        (0, 1, -2.0 * b / r2),
        (0, 0, (a * a + b * b) / r2 - 1.0),
    ]
}

fn poly_mul(p: &[(u32, u32, f64)], q: &[(u32, u32, f64)]) -> Vec<(u32, u32, f64)> {
    let mut out: Vec<(u32, u32, f64)> = Vec::new();
    for &(i, j, c) in p {
        for &(k, l, d) in q {
            let key = (i + k, j + l);
            match out.iter_mut().find(|t| (t.0, t.1) == key) {
                Some(t) => t.2 += c * d,
                None => out.push((key.0, key.1, c * d)),
            }
        }
    }
    out
}
