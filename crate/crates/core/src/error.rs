use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("surface tensions violate the strict triangle inequality: {0:?}")]
    TensionsDegenerate([f64; 3]),
    #[error("point ({0}, {1}) is not on the boundary (psi = {2:e})")]
    NotOnBoundary(f64, f64, f64),
    #[error("gradient of psi vanishes at ({0}, {1})")]
    SingularGradient(f64, f64),
    #[error("ray does not leave the domain inside the bounding box")]
    NoIntersection,
    #[error("offset line q = {q} of branch {branch} does not meet the boundary near the reference endpoint")]
    OffsetMissesBoundary { branch: usize, q: f64 },
    #[error("metric |Phi_sigma| = {0:e} is degenerate")]
    DegenerateMetric(f64),
    #[error("junction matrix M has det = {0:e}, state left the admissible vicinity")]
    MatrixMNotInvertible(f64),
    #[error("stationary Jacobian is singular (condition number {0:e}); fix the rotation gauge")]
    SingularJacobian(f64),
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("eigen solve failed: {0}")]
    EigenSolveFailed(String),
    #[error("function is identically zero")]
    ZeroFunction,
    #[error("constraint sum gamma*phi(0) = {0:e} is violated")]
    ConstraintViolated(f64),
    #[error("compatibility correction of the initial data failed (residual {0:e})")]
    CompatibilityFailed(f64),
    #[error("time step {dt:e} exceeds the guard {limit:e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("boundary-condition Newton sweep diverged (residual {0:e})")]
    NewtonDiverged(f64),
    #[error("curve sample is degenerate")]
    DegenerateCurve,
    #[error("series is not positive on the fit window")]
    NonPositiveSeries,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
