//! Error types, one enum per subsystem.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    /// The Legendre maximizer landed on the boundary of the fiber search box;
    /// `p_bound` is too small for the requested velocity.
    #[error("Legendre maximizer on the fiber boundary at x={x:?}, v={v:?} (p_bound={p_bound})")]
    MaximizerOnBoundary {
        x: Vec<f64>,
        v: Vec<f64>,
        p_bound: f64,
    },
    /// Sampled fiber convexity or superlinearity check failed.
    #[error("Hamiltonian fails Tonelli conditions on {} sample(s); worst second difference {worst:.3e}", samples.len())]
    ConvexityViolation {
        samples: Vec<(Vec<f64>, Vec<f64>)>,
        worst: f64,
    },
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid mismatch: {left} vs {right} nodes per axis")]
    GridMismatch { left: usize, right: usize },
}

#[derive(Debug, Error)]
pub enum SemigroupError {
    /// The one-step minimum keeps decreasing out to the velocity box; the
    /// search radius `v_bound` is too small for this model.
    #[error("one-step minimization unbounded below at node {node} (v_bound={v_bound})")]
    UnboundedBelow { node: usize, v_bound: f64 },
    #[error("one-step maximization unbounded above at node {node} (v_bound={v_bound})")]
    UnboundedAbove { node: usize, v_bound: f64 },
    #[error("stationary solve did not converge in {iterations} iterations (last residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    /// Regularized field is not C^{1,1}-quality: its second-difference
    /// constants are not stable across scales. Signals s, t too large or a
    /// grid too coarse.
    #[error("regularization failed the two-sided C^{{1,1}} check (scale variation {variation:.2} > {limit:.2})")]
    RegularityFailure { variation: f64, limit: f64 },
}

#[derive(Debug, Error)]
pub enum AubryError {
    /// Interpolated gradient exceeded 10*p_bound along a characteristic;
    /// the curve crossed a crease of the value function.
    #[error("interpolated gradient blow-up at t={t:.4}, |grad|={magnitude:.3e} (limit {limit:.3e})")]
    GradientBlowup { t: f64, magnitude: f64, limit: f64 },
    /// No grid node passed the residual + recurrence filter.
    #[error("no Aubry candidate found (eps_res={eps_res:.3e} too tight?)")]
    EmptyAubry { eps_res: f64 },
    #[error(transparent)]
    Semigroup(#[from] SemigroupError),
}

#[derive(Debug, Error)]
pub enum FlowError {
    /// |p| exceeded the escape guard. The forward flow is complete for
    /// Tonelli dissipative systems, so this indicates a configuration error.
    #[error("trajectory escaped the momentum guard at t={t:.4}: |p|={magnitude:.3e} > {guard:.3e}")]
    Escape { t: f64, magnitude: f64, guard: f64 },
    /// Sublevel sampling kept no phase point.
    #[error("sublevel region is empty (subsolution quality too low)")]
    EmptyRegion,
}
