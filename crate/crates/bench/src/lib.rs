//! Fixtures shared by the benchmarks in `benches/`.

use trinet::{young_angles, Circle, ImplicitDomain, Point, StationaryNetwork, SurfaceTensions};

/// Disk of radius 4 with three unit holes on the Young directions at distance 2.
/// The symmetric network with junction at the origin is stationary and stable.
pub fn three_holes() -> ImplicitDomain {
    let d = young_angles(&SurfaceTensions::uniform()).tangents(0.0);
    ImplicitDomain::perforated(
        Circle::new(Point::zeros(), 4.0),
        d.iter().map(|v| Circle::new(v * 2.0, 1.0)).collect(),
    )
}

pub fn symmetric_network(domain: &ImplicitDomain) -> StationaryNetwork {
    StationaryNetwork::on_domain(domain, SurfaceTensions::uniform(), Point::zeros(), 0.0)
        .expect("the symmetric network reaches the boundary")
}
