use thiserror::Error;

/// Grid point `(i, j, k)` used to report where a constraint was violated.
pub type GridIndex = (usize, usize, usize);

#[derive(Debug, Error)]
pub enum Error {
    #[error("time step {dt:e} exceeds the stability bound {dt_max:e}")]
    Stability { dt: f64, dt_max: f64 },

    #[error("map left the tubular neighborhood at {at:?}: |rho| = {dist:e} > {radius:e}")]
    TubeViolation { at: GridIndex, dist: f64, radius: f64 },

    #[error("map left the chart guard at {at:?}: |f| = {norm:e} > {guard:e}")]
    GuardViolation { at: GridIndex, norm: f64, guard: f64 },

    #[error("point outside the tubular neighborhood: |rho| = {dist:e} > {radius:e}")]
    OutsideTube { dist: f64, radius: f64 },

    #[error("point outside the chart guard: |f| = {norm:e} > {guard:e}")]
    OutsideGuard { norm: f64, guard: f64 },

    #[error("linear solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("non-finite value in field at {at:?}")]
    NonFinite { at: GridIndex },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Snapshot(#[from] crate::fields::SnapshotError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
