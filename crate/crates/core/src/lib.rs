//! Triple-junction curve networks in planar domains: stationary states,
//! linear stability, and the curvature flow written as normal graphs over a
//! stationary network.

pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod evolution;
pub mod io;
pub mod param;
pub mod stability;
pub mod steady;
pub mod tension;

pub use diagnostics::{
    decay_fit, decay_fit_window, energy, energy_law_residual, junction_and_robin_residuals, resample,
    CurveSample, DecayFit, DiagnosticsRecord,
};
pub use domain::{Circle, ImplicitDomain, LevelSetValue, Point, Shape};
pub use error::{Error, Result};
pub use evolution::{
    initial_state, junction_kinematics, run, Departure, EvolveConfig, Integrator, Perturbation,
    RunStatus, Trajectory,
};
pub use io::{parse_config, parse_network, read_trajectory, write_network, write_trajectory, RunConfig, TrajectoryRow};
pub use param::{GraphState, Parameterization, StationaryNetwork};
pub use stability::{
    assemble_forms, max_eigenvalue, rayleigh_quotient, stability_criterion, SpectrumResult,
    StabilityVerdict, Verdict,
};
pub use steady::{find_stationary, solve_stationary, SteadyGuess, SteadySolution};
pub use tension::{
    force_balance_residual, junction_matrix, stick_residual, young_angles, JunctionAngles,
    JunctionMatrix, SurfaceTensions,
};

/// Counterclockwise rotation by a right angle.
#[inline]
pub fn rotate(v: nalgebra::Vector2<f64>) -> nalgebra::Vector2<f64> {
    nalgebra::Vector2::new(-v.y, v.x)
}
