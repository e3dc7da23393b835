mod common;

use trinet::param::DEFAULT_DET_M_FLOOR;
use trinet::{
    solve_stationary, GraphState, ImplicitDomain, Parameterization, Point, StationaryNetwork, SteadyGuess,
    SurfaceTensions,
};

fn test_networks() -> Vec<(StationaryNetwork, ImplicitDomain)> {
    let mut out = Vec::new();
    for d in [ImplicitDomain::unit_disk(), common::three_holes(), common::lopsided(), common::lopsided().expanded().unwrap()] {
        out.push((common::symmetric_network(&d), d));
    }
    let e = ImplicitDomain::ellipse(Point::new(0.1, -0.2), 1.4, 1.0);
    let t = SurfaceTensions::new([1.0, 1.2, 0.9]).unwrap();
    let s = solve_stationary(&e, &t, &SteadyGuess::new(Point::new(0.1, -0.2), 0.3), 1e-12, 50).unwrap();
    out.push((s.network, e));
    out
}

#[test]
fn reference_map_identities_hold_to_fd_accuracy() {
    for (net, d) in test_networks() {
        let p = Parameterization::new(&net, &d);
        let err = common::psi_identity_error(&p);
        assert!(err < 1e-8, "{:?}: {err:e}", d.shape());
        for i in 0..3 {
            for s in [0.0, 0.3, 0.7] {
                let x = p.psi_map(i, s * net.lengths[i], 0.0, 0.0).unwrap();
                assert!((x - net.point(i, s * net.lengths[i])).norm() < 1e-14);
            }
        }
    }
}

#[test]
fn curvature_is_second_order_against_geometry() {
    for (net, d) in test_networks() {
        let p = Parameterization::new(&net, &d);
        let errs: Vec<f64> = [20, 40, 80, 160].iter().map(|&n| common::curvature_fd_error(&p, n)).collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "{:?}: {errs:?}", d.shape());
        }
    }
}

#[test]
fn zero_state_coefficients_everywhere() {
    for (net, d) in test_networks() {
        let p = Parameterization::new(&net, &d);
        let z = GraphState::zero(24);
        let c = p.coefficients(&z).unwrap();
        assert!((c.det_m - 1.0).abs() < 1e-12);
        assert!(c.det_m > DEFAULT_DET_M_FLOOR);
        for i in 0..3 {
            assert!(c.lambda[i].iter().all(|v| v.abs() < 1e-12));
            assert!(c.l[i].iter().all(|v| (v - 1.0).abs() < 1e-12));
            assert!(p.outer_bc_residual(&z, i).unwrap().abs() < 1e-9);
        }
        let (g12, g13) = p.junction_angle_residuals(&z).unwrap();
        assert!(g12.abs() < 1e-14 && g13.abs() < 1e-14);
    }
}

#[test]
fn stationary_networks_satisfy_all_invariants() {
    for (net, d) in test_networks() {
        let c = net.check(&d);
        assert!(c.max() < 1e-9, "{:?}: {c:?}", d.shape());
        assert!(net.angles.sum_residual() < 1e-12);
        assert!(net.angles.sine_law_residual(&net.tensions) < 1e-12);
    }
}

#[test]
fn disk_with_fixed_gauge_converges_to_centre() {
    let d = ImplicitDomain::unit_disk();
    let s = solve_stationary(&d, &SurfaceTensions::uniform(), &SteadyGuess::gauged(Point::new(0.05, 0.03), 0.0), 1e-12, 50)
        .unwrap();
    let net = &s.network;
    assert!(net.p_star.norm() < 1e-10);
    for i in 0..3 {
        assert!((net.lengths[i] - 1.0).abs() < 1e-10);
        assert!((net.curvatures[i] + 1.0).abs() < 1e-8);
    }
}

#[test]
fn shifted_domain_moves_the_junction_along() {
    let shift = Point::new(0.3, -0.7);
    let d = ImplicitDomain::ellipse(shift, 1.3, 1.0);
    let t = SurfaceTensions::uniform();
    let base = solve_stationary(&ImplicitDomain::ellipse(Point::zeros(), 1.3, 1.0), &t, &SteadyGuess::new(Point::new(0.02, 0.01), 0.05), 1e-12, 50)
        .unwrap()
        .network;
    let moved = solve_stationary(&d, &t, &SteadyGuess::new(shift + Point::new(0.02, 0.01), 0.05), 1e-12, 50)
        .unwrap()
        .network;
    assert!((moved.p_star - base.p_star - shift).norm() < 1e-9);
    for i in 0..3 {
        assert!((moved.lengths[i] - base.lengths[i]).abs() < 1e-9);
        assert!((moved.curvatures[i] - base.curvatures[i]).abs() < 1e-8);
    }
}
