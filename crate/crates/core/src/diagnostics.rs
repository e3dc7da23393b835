//! Geometric diagnostics on arc-length resampled curves: energy, curvature
//! norms, junction and outer-boundary identities, decay fits.

use crate::domain::{ImplicitDomain, Point};
use crate::error::{Error, Result};
use crate::evolution::junction_kinematics;
use crate::param::{GraphState, Parameterization, StationaryNetwork};
use crate::rotate;
use crate::tension::SurfaceTensions;

/// One branch sampled uniformly in arc length from the junction outward.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSample {
    pub s: Vec<f64>,
    pub points: Vec<Point>,
    pub tangents: Vec<Point>,
    pub normals: Vec<Point>,
    pub kappa: Vec<f64>,
    pub kappa_s: Vec<f64>,
    pub kappa_ss: Vec<f64>,
    /// Total chord length of the input polyline.
    pub length: f64,
}

fn d1(u: &[Point], h: f64, j: usize) -> Point {
    let n = u.len() - 1;
    if j == 0 {
        (u[0] * -3.0 + u[1] * 4.0 - u[2]) / (2.0 * h)
    } else if j == n {
        (u[n] * 3.0 - u[n - 1] * 4.0 + u[n - 2]) / (2.0 * h)
    } else {
        (u[j + 1] - u[j - 1]) / (2.0 * h)
    }
}

fn d2(u: &[Point], h: f64, j: usize) -> Point {
    let n = u.len() - 1;
    if j == 0 {
        (u[0] * 2.0 - u[1] * 5.0 + u[2] * 4.0 - u[3]) / (h * h)
    } else if j == n {
        (u[n] * 2.0 - u[n - 1] * 5.0 + u[n - 2] * 4.0 - u[n - 3]) / (h * h)
    } else {
        (u[j + 1] - u[j] * 2.0 + u[j - 1]) / (h * h)
    }
}

fn scalar(u: &[f64]) -> Vec<Point> {
    u.iter().map(|&v| Point::new(v, 0.0)).collect()
}

/// Resamples a polyline at `m + 1` points equally spaced in cumulative chord
/// length (four-point Lagrange interpolation) and differentiates by finite
/// differences.
pub fn resample(points: &[Point], m: usize) -> Result<CurveSample> {
    if points.len() < 4 || m < 3 {
        return Err(Error::DegenerateCurve);
    }
    let mut c = vec![0.0; points.len()];
    for j in 1..points.len() {
        c[j] = c[j - 1] + (points[j] - points[j - 1]).norm();
    }
    let r = *c.last().unwrap();
    let min_seg = c.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if !(r > 0.0) || !(min_seg > 1e-12 * r) {
        return Err(Error::DegenerateCurve);
    }
    let last = points.len() - 1;
    let h = r / m as f64;
    let s: Vec<f64> = (0..=m).map(|k| k as f64 * h).collect();
    let mut seg = 0;
    let x: Vec<Point> = s
        .iter()
        .map(|&t| {
            while seg + 1 < last && c[seg + 1] < t {
                seg += 1;
            }
            let lo = seg.saturating_sub(1).min(last - 3);
            let idx = [lo, lo + 1, lo + 2, lo + 3];
            let mut p = Point::zeros();
            for &a in &idx {
                let w: f64 = idx.iter().filter(|&&b| b != a).map(|&b| (t - c[b]) / (c[a] - c[b])).product();
                p += points[a] * w;
            }
            p
        })
        .collect();
    let mut tangents = Vec::with_capacity(m + 1);
    let mut kappa = Vec::with_capacity(m + 1);
    let mut speed = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let (a, b) = (d1(&x, h, j), d2(&x, h, j));
        let v = a.norm();
        tangents.push(a / v);
        kappa.push((a.x * b.y - a.y * b.x) / (v * v * v));
        speed.push(v);
    }
    let ks: Vec<f64> = (0..=m).map(|j| d1(&scalar(&kappa), h, j).x / speed[j]).collect();
    let kss: Vec<f64> = (0..=m).map(|j| d1(&scalar(&ks), h, j).x / speed[j]).collect();
    let normals = tangents.iter().map(|t| rotate(*t)).collect();
    Ok(CurveSample {
        s,
        points: x,
        tangents,
        normals,
        kappa,
        kappa_s: ks,
        kappa_ss: kss,
        length: r,
    })
}

/// `E = sum gamma_i length_i`.
pub fn energy(samples: &[CurveSample; 3], tensions: &SurfaceTensions) -> f64 {
    tensions.weighted_sum([samples[0].length, samples[1].length, samples[2].length])
}

/// `sum gamma int |f|^p ds` by the trapezoid rule.
pub fn weighted_lp(samples: &[CurveSample; 3], tensions: &SurfaceTensions, p: i32, f: impl Fn(&CurveSample) -> &Vec<f64>) -> f64 {
    (0..3)
        .map(|i| {
            let v = f(&samples[i]);
            let m = v.len() - 1;
            let h = samples[i].length / m as f64;
            let s: f64 = v
                .iter()
                .enumerate()
                .map(|(j, x)| if j == 0 || j == m { 0.5 } else { 1.0 } * x.abs().powi(p))
                .sum();
            tensions.get(i) * h * s
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryResiduals {
    /// `|sum gamma kappa(0)|`.
    pub junction: f64,
    /// Largest pairwise difference of `kappa_s + kappa v` at the junction.
    pub flux: f64,
    /// `|sum gamma v|`.
    pub sum_v: f64,
    /// `max |kappa_s + h kappa|` at the outer ends.
    pub outer: f64,
    /// `max |sin|` of the deviation from a right angle at the outer ends.
    pub perp: f64,
    /// Boundary curvature at the moving outer ends.
    pub h_end: [f64; 3],
}

/// Junction and outer residuals. `v` are the tangential junction velocities;
/// with `None` they are taken as `Q kappa(0)`, the value implied by `V = kappa`.
pub fn junction_and_robin_residuals(
    samples: &[CurveSample; 3],
    net: &StationaryNetwork,
    domain: &ImplicitDomain,
    v: Option<[f64; 3]>,
) -> Result<BoundaryResiduals> {
    let t = &net.tensions;
    let k0 = [0, 1, 2].map(|i| samples[i].kappa[0]);
    let v = v.unwrap_or_else(|| net.q.apply(k0));
    let flux = [0, 1, 2].map(|i| samples[i].kappa_s[0] + k0[i] * v[i]);
    let flux_res = (0..3).map(|i| (flux[i] - flux[(i + 1) % 3]).abs()).fold(0.0, f64::max);
    let mut h_end = [0.0; 3];
    let mut outer = 0.0_f64;
    let mut perp = 0.0_f64;
    for i in 0..3 {
        let sm = &samples[i];
        let m = sm.kappa.len() - 1;
        let x = sm.points[m];
        h_end[i] = domain.boundary_curvature(&x)?;
        outer = outer.max((sm.kappa_s[m] + h_end[i] * sm.kappa[m]).abs());
        let g = domain.eval(&x).grad.normalize();
        let tn = sm.tangents[m];
        perp = perp.max((tn.x * g.y - tn.y * g.x).abs());
    }
    Ok(BoundaryResiduals {
        junction: t.weighted_sum(k0).abs(),
        flux: flux_res,
        sum_v: t.weighted_sum(v).abs(),
        outer,
        perp,
        h_end,
    })
}

/// Diagnostics of one recorded state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub energy: f64,
    pub kappa_l2_sq: f64,
    pub kappa_l4_4: f64,
    pub kappa_linf: f64,
    pub kappa_s_l2_sq: f64,
    pub kappa_ss_l2_sq: f64,
    /// `(|kappa| + |kappa_ss|)^2`.
    pub kappa_h2_sq: f64,
    pub p: Point,
    pub mu: [f64; 3],
    pub res_junction: f64,
    pub res_flux: f64,
    pub res_sum_v: f64,
    pub res_outer: f64,
    pub res_perp: f64,
    /// `|v - Q kappa(0)|` with `v` from the time-differenced junction motion,
    /// when the previous state is available.
    pub res_kinematic: Option<f64>,
    pub h_end: [f64; 3],
}

/// Resampled curves of a state, one arc-length sample per grid node.
pub fn samples(param: &Parameterization, state: &GraphState) -> Result<[CurveSample; 3]> {
    let curves = param.curve_from_graph(state)?;
    let n = state.n();
    let a = resample(&curves[0], n)?;
    let b = resample(&curves[1], n)?;
    let c = resample(&curves[2], n)?;
    Ok([a, b, c])
}

/// Full diagnostics; `prev` (the state one step earlier and the step) enables
/// the kinematic junction checks.
pub fn record(param: &Parameterization, state: &GraphState, prev: Option<(&GraphState, f64)>) -> Result<DiagnosticsRecord> {
    let net = param.net;
    let t = &net.tensions;
    let sm = samples(param, state)?;
    let kin = match prev {
        Some((before, _)) => Some(junction_kinematics(param, before, state)?),
        None => None,
    };
    let res = junction_and_robin_residuals(&sm, net, param.domain, None)?;
    let qk = net.q.apply([0, 1, 2].map(|i| sm[i].kappa[0]));
    let res_kinematic = kin.map(|(_, small)| (0..3).map(|i| (small[i] - qk[i]).powi(2)).sum::<f64>().sqrt());
    let k2 = weighted_lp(&sm, t, 2, |s| &s.kappa);
    let kss2 = weighted_lp(&sm, t, 2, |s| &s.kappa_ss);
    Ok(DiagnosticsRecord {
        t: state.t,
        energy: energy(&sm, t),
        kappa_l2_sq: k2,
        kappa_l4_4: weighted_lp(&sm, t, 4, |s| &s.kappa),
        kappa_linf: sm.iter().flat_map(|s| s.kappa.iter()).fold(0.0_f64, |m, v| m.max(v.abs())),
        kappa_s_l2_sq: weighted_lp(&sm, t, 2, |s| &s.kappa_s),
        kappa_ss_l2_sq: kss2,
        kappa_h2_sq: (k2.sqrt() + kss2.sqrt()).powi(2),
        p: sm[0].points[0],
        mu: state.mu,
        res_junction: res.junction,
        res_flux: res.flux,
        res_sum_v: res.sum_v,
        res_outer: res.outer,
        res_perp: res.perp,
        res_kinematic,
        h_end: res.h_end,
    })
}

/// `|(E_{k+1} - E_k) / dt + mean |kappa|^2|` between consecutive records,
/// reported at the interval midpoints.
pub fn energy_law_residual(records: &[DiagnosticsRecord]) -> Vec<(f64, f64)> {
    records
        .windows(2)
        .filter(|w| w[1].t > w[0].t)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            let v = (w[1].energy - w[0].energy) / dt + 0.5 * (w[0].kappa_l2_sq + w[1].kappa_l2_sq);
            (0.5 * (w[0].t + w[1].t), v.abs())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares fit of `log y = intercept + rate t` over the last half of
/// the records whose value exceeds `1e-12`.
pub fn decay_fit(t: &[f64], y: &[f64]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).map(|(&a, &b)| (a, b)).filter(|p| p.1 > 1e-12).collect();
    let start = pts.len() / 2;
    fit_log_linear(&pts[start..])
}

/// Log-linear fit over `t0 <= t <= t1`; every value in the window must be positive.
pub fn decay_fit_window(t: &[f64], y: &[f64], t0: f64, t1: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).map(|(&a, &b)| (a, b)).filter(|p| p.0 >= t0 && p.0 <= t1).collect();
    fit_log_linear(&pts)
}

fn fit_log_linear(pts: &[(f64, f64)]) -> Result<DecayFit> {
    if pts.len() < 2 || pts.iter().any(|p| !(p.1 > 0.0)) {
        return Err(Error::NonPositiveSeries);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1.ln() - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::NonPositiveSeries);
    }
    let rate = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(DecayFit {
        rate,
        intercept: my - rate * mx,
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc(radius: f64, n: usize, span: f64) -> Vec<Point> {
        (0..=n)
            .map(|j| {
                // slightly non-uniform parameter to exercise the resampling
                let u = j as f64 / n as f64;
                let a = span * (u + 0.05 * (std::f64::consts::PI * u).sin() / std::f64::consts::PI);
                Point::new(radius * a.cos(), radius * a.sin())
            })
            .collect()
    }

    #[test]
    fn straight_segment() {
        let pts: Vec<Point> = (0..=20).map(|j| Point::new(0.1 * j as f64, 0.05 * j as f64)).collect();
        let s = resample(&pts, 20).unwrap();
        assert!(s.kappa.iter().all(|k| k.abs() < 1e-10));
        assert!((s.length - (2.0f64.powi(2) + 1.0f64).sqrt()).abs() < 1e-12);
        assert!(s.tangents.iter().all(|t| (t.norm() - 1.0).abs() < 1e-10));
        let total: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        assert!((s.length - total).abs() < 1e-12);
    }

    #[test]
    fn circle_arc_curvature_converges() {
        let err = |n: usize| {
            let s = resample(&arc(2.0, n, 1.0), n).unwrap();
            s.kappa.iter().map(|k| (k - 0.5).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(40), err(80));
        assert!(e1 < 1e-3, "{e1}");
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn degenerate_input() {
        let pts = vec![Point::zeros(); 10];
        assert_eq!(resample(&pts, 9), Err(Error::DegenerateCurve));
    }

    #[test]
    fn exact_exponential_fit() {
        let t: Vec<f64> = (0..40).map(|k| 0.05 * k as f64).collect();
        let y: Vec<f64> = t.iter().map(|s| 2.5 * (-3.0 * s).exp()).collect();
        let f = decay_fit(&t, &y).unwrap();
        assert!((f.rate + 3.0).abs() < 1e-10);
        assert!((f.intercept - 2.5f64.ln()).abs() < 1e-10);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert_eq!(decay_fit(&t, &vec![0.0; 40]), Err(Error::NonPositiveSeries));
        let f = decay_fit_window(&t, &y, 0.0, 0.5).unwrap();
        assert!((f.rate + 3.0).abs() < 1e-10);
    }

    #[test]
    fn stationary_records_have_zero_energy_residual() {
        let rec = |t| DiagnosticsRecord {
            t,
            energy: 3.0,
            kappa_l2_sq: 0.0,
            kappa_l4_4: 0.0,
            kappa_linf: 0.0,
            kappa_s_l2_sq: 0.0,
            kappa_ss_l2_sq: 0.0,
            kappa_h2_sq: 0.0,
            p: Point::zeros(),
            mu: [0.0; 3],
            res_junction: 0.0,
            res_flux: 0.0,
            res_sum_v: 0.0,
            res_outer: 0.0,
            res_perp: 0.0,
            res_kinematic: None,
            h_end: [0.0; 3],
        };
        let r = energy_law_residual(&[rec(0.0), rec(0.1), rec(0.2)]);
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|x| x.1 == 0.0));
    }
}
