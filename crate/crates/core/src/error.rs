//! Error type shared by the whole crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid dimension must be 1 or 2, got {0}")]
    BadGridDim(usize),

    #[error("grid extents must be even and at least 8, got {0}")]
    BadGridShape(usize),

    #[error("torus periods must be positive and finite, got {0}")]
    BadGridLength(f64),

    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("tensor slot signature mismatch: {0}")]
    SlotMismatch(String),

    #[error("metric is not positive definite at point {point}: min eigenvalue {min_eig:.3e}")]
    NotSpd { point: usize, min_eig: f64 },

    #[error("metric is near-singular at point {point}: condition number {cond:.3e}")]
    NearSingular { point: usize, cond: f64 },

    #[error("amplitude {0} outside [0, 0.5]")]
    BadAmplitude(f64),

    #[error("max_mode {max_mode} exceeds a quarter of the grid extent {limit}")]
    BadMaxMode { max_mode: usize, limit: usize },

    #[error("random metric failed the SPD margin after clamping: min eigenvalue {min_eig:.3e}")]
    RandomMetricNotSpd { min_eig: f64 },

    #[error("operator weight must stay positive, found min {0:.3e}")]
    NonPositiveWeight(f64),

    #[error("conjugate gradient stalled at relative residual {residual:.3e} after {iterations} iterations")]
    CgDidNotConverge { residual: f64, iterations: usize },

    #[error("geodesic reached the boundary of the positive cone at t = {t:.6}")]
    BoundaryReached { t: f64 },

    #[error("log map did not converge after {iterations} iterations: residual {residual:.3e}")]
    LogMapDidNotConverge { iterations: usize, residual: f64 },

    #[error("degenerate scaling exponent a = 0 (conformal power k = -1)")]
    DegenerateExponent,

    #[error("no closed-form scaling solution for this operator family")]
    NoClosedForm,

    #[error("scaling coefficient is not positive at r = {r:.3e}: psi = {psi:.3e}")]
    PsiNotPositive { r: f64, psi: f64 },

    #[error("grid too large for dense operator assembly: {points} points (limit {limit})")]
    GridTooLargeForAssembly { points: usize, limit: usize },

    #[error("finite-difference probe left the positive cone even at the smallest step")]
    ProbeLeftCone,

    #[error("nonfinite value produced in {0}")]
    NonFinite(&'static str),

    #[error("malformed field file: {0}")]
    MalformedField(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
