#![allow(dead_code)]

use trinet::{young_angles, Circle, ImplicitDomain, Point, StationaryNetwork, SurfaceTensions};

/// Disk of radius 4 with three unit holes centred at `2 d_k`, `d_k` the Young
/// directions at the origin. Every branch has length 1 and meets a hole
/// radially, so the endpoint curvature is `+1`.
pub fn three_holes() -> ImplicitDomain {
    let d = young_angles(&SurfaceTensions::uniform()).tangents(0.0);
    ImplicitDomain::perforated(
        Circle::new(Point::zeros(), 4.0),
        d.iter().map(|v| Circle::new(v * 2.0, 1.0)).collect(),
    )
}

/// Nonconvex domain with `l = (1, 1, 1)` and `h = (-2/3, 4, 4)`: the first
/// branch ends on the outer circle, the other two on small holes.
pub fn lopsided() -> ImplicitDomain {
    let d = young_angles(&SurfaceTensions::uniform()).tangents(0.0);
    ImplicitDomain::perforated(
        Circle::new(-d[0] * 0.5, 1.5),
        vec![Circle::new(d[1] * 1.25, 0.25), Circle::new(d[2] * 1.25, 0.25)],
    )
}

pub fn symmetric_network(domain: &ImplicitDomain) -> StationaryNetwork {
    StationaryNetwork::on_domain(domain, SurfaceTensions::uniform(), Point::zeros(), 0.0).unwrap()
}

/// `(phi(0), phi'(0))` of `phi'' = lambda phi` integrated backward from
/// `phi(l) = 1`, `phi'(l) = -h` by classical RK4.
pub fn shoot(lambda: f64, l: f64, h: f64, steps: usize) -> (f64, f64) {
    let f = |y: [f64; 2]| [y[1], lambda * y[0]];
    let dt = -l / steps as f64;
    let mut y = [1.0, -h];
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f([y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1]]);
        let k3 = f([y[0] + 0.5 * dt * k2[0], y[1] + 0.5 * dt * k2[1]]);
        let k4 = f([y[0] + dt * k3[0], y[1] + dt * k3[1]]);
        y[0] += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        y[1] += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
    }
    (y[0], y[1])
}

struct Shot {
    a: [f64; 3],
    b: [f64; 3],
}

fn shots(lambda: f64, l: [f64; 3], h: [f64; 3]) -> Shot {
    let mut a = [0.0; 3];
    let mut b = [0.0; 3];
    for i in 0..3 {
        let (x, y) = shoot(lambda, l[i], h[i], 4000);
        let r = x.hypot(y);
        a[i] = x / r;
        b[i] = y / r;
    }
    Shot { a, b }
}

// Matching function: eigenvalues with all phi_i'(0) nonzero are its roots.
fn matching(s: &Shot, g: [f64; 3]) -> f64 {
    (0..3).map(|i| g[i] * s.a[i] * s.b[(i + 1) % 3] * s.b[(i + 2) % 3]).sum()
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest eigenvalue of the three-branch problem by shooting. Candidates are
/// sign changes of the matching function, and values where two branches
/// have a vanishing slope at the junction simultaneously (the matching
/// function has a double root there, e.g. on symmetric networks).
pub fn shooting_lambda_max(l: [f64; 3], h: [f64; 3], g: [f64; 3]) -> f64 {
    // lambda <= max (k/l + k^2) with k = max(-h, 0), from the trace inequality
    let hi = (0..3)
        .map(|i| {
            let k = (-h[i]).max(0.0);
            k / l[i] + k * k
        })
        .fold(0.0, f64::max)
        + 1.0;
    let step = 1e-3;
    let mut x1 = hi;
    let mut s1 = shots(x1, l, h);
    loop {
        let x0 = x1 - step;
        let s0 = shots(x0, l, h);
        let mut best: Option<f64> = None;
        if (matching(&s0, g) > 0.0) != (matching(&s1, g) > 0.0) {
            best = Some(bisect(|x| matching(&shots(x, l, h), g), x0, x1));
        }
        let mut slope_roots = Vec::new();
        for i in 0..3 {
            if (s0.b[i] > 0.0) != (s1.b[i] > 0.0) {
                slope_roots.push(bisect(|x| shots(x, l, h).b[i], x0, x1));
            }
        }
        for (k, &r) in slope_roots.iter().enumerate() {
            if slope_roots.iter().skip(k + 1).any(|&q| (q - r).abs() < 1e-9) {
                best = Some(best.map_or(r, |b: f64| b.max(r)));
            }
        }
        if let Some(b) = best {
            return b;
        }
        x1 = x0;
        s1 = s0;
        assert!(x1 > -1e4, "no eigenvalue found");
    }
}

/// Curvature of the circle through three consecutive points, signed with
/// respect to the left normal of the traversal direction.
pub fn three_point_curvature(a: Point, b: Point, c: Point) -> f64 {
    let u = b - a;
    let v = c - b;
    let w = c - a;
    2.0 * (u.x * v.y - u.y * v.x) / (u.norm() * v.norm() * w.norm())
}

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn richardson(f: impl Fn(f64) -> Point, h: f64) -> Point {
    let d = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    (d(h / 2.0) * 4.0 - d(h)) / 3.0
}

/// Largest deviation, over all branches and a few stations, between finite
/// differences of `psi_map` at `(q, mu) = (0, 0)` and the values
/// `Psi_s = T`, `Psi_q = N`, `Psi_mu = (1 - s/l) T`, `Psi_ss = 0`,
/// `Psi_sq = 0`, `Psi_smu = -T/l`, `Psi_ssq = 0`, `Psi_ssmu = 0`.
///
/// `Psi` is affine in `s` and `mu`, so those differences use a wide step
/// (exact up to rounding); the `q` direction uses Richardson-extrapolated
/// central differences.
pub fn psi_identity_error(p: &trinet::Parameterization) -> f64 {
    let net = p.net;
    let f = |i: usize, s: f64, q: f64, mu: f64| p.psi_map(i, s, q, mu).unwrap();
    let w = 0.1;
    let hq = 2e-3;
    let mut worst = 0.0_f64;
    for i in 0..3 {
        let (t, nv, l) = (net.tangents[i], net.normals[i], net.lengths[i]);
        let d_s = |s: f64, q: f64, mu: f64| (f(i, s + w, q, mu) - f(i, s - w, q, mu)) / (2.0 * w);
        let d_ss = |s: f64, q: f64, mu: f64| (f(i, s + w, q, mu) - f(i, s, q, mu) * 2.0 + f(i, s - w, q, mu)) / (w * w);
        let d_mu = |s: f64, q: f64, mu: f64| (f(i, s, q, mu + w) - f(i, s, q, mu - w)) / (2.0 * w);
        for s in [0.0, 0.25 * l, 0.5 * l, 0.9 * l] {
            let checks = [
                (d_s(s, 0.0, 0.0), t),
                (richardson(|e| f(i, s, e, 0.0), hq), nv),
                (d_mu(s, 0.0, 0.0), t * (1.0 - s / l)),
                (d_ss(s, 0.0, 0.0), Point::zeros()),
                (richardson(|e| d_s(s, e, 0.0), hq), Point::zeros()),
                ((d_s(s, 0.0, w) - d_s(s, 0.0, -w)) / (2.0 * w), -t / l),
                (richardson(|e| d_ss(s, e, 0.0), hq), Point::zeros()),
                ((d_ss(s, 0.0, w) - d_ss(s, 0.0, -w)) / (2.0 * w), Point::zeros()),
            ];
            for (fd, exact) in checks {
                worst = worst.max((fd - exact).norm());
            }
        }
    }
    worst
}

/// Smooth test profile on branch `i`: `(rho, rho_s, rho_ss)` at `s`.
pub fn test_profile(i: usize, s: f64) -> (f64, f64, f64) {
    let (a, k, c) = (0.04, 2.0 + i as f64, 0.5 * i as f64);
    (
        a * (k * s + c).sin() + 0.02 * s * s,
        a * k * (k * s + c).cos() + 0.04 * s,
        -a * k * k * (k * s + c).sin() + 0.04,
    )
}

/// Max difference between `curvature_kappa` and the three-point circle
/// curvature of the sampled graph curve, over interior nodes of `n` elements.
pub fn curvature_fd_error(p: &trinet::Parameterization, n: usize) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..3 {
        let l = p.net.lengths[i];
        let mu = 0.01 * (i as f64 - 1.0);
        let h = l / n as f64;
        let pts: Vec<Point> = (0..=n)
            .map(|j| {
                let s = j as f64 * h;
                p.psi_map(i, s, test_profile(i, s).0, mu).unwrap()
            })
            .collect();
        for j in 1..n {
            let s = j as f64 * h;
            let (r, rs, rss) = test_profile(i, s);
            let k = p.curvature_kappa(i, r, rs, rss, mu, s).unwrap();
            let g = three_point_curvature(pts[j - 1], pts[j], pts[j + 1]);
            worst = worst.max((k - g).abs());
        }
    }
    worst
}
