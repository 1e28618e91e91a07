//! Numerical weak KAM toolkit for discounted Hamilton-Jacobi equations
//!
//! Solves `lambda*u + H(x, du) = 0` on the flat torus (1D or 2D) by
//! semi-Lagrangian value iteration on the discounted Lax-Oleinik semigroup,
//! and studies the associated dissipative phase flow
//! `x' = H_p, p' = -H_x - lambda*p`:
//!
//! * [`model`] - discounted Tonelli Hamiltonians, Lagrangians via Legendre
//!   transform, preset potentials on the torus;
//! * [`grid`] - periodic grids, interpolation, discrete gradients and
//!   semiconcavity estimators;
//! * [`semigroup`] - backward/forward Lax-Oleinik operators, the stationary
//!   solve for the value function, Lasry-Lions double regularization;
//! * [`aubry`] - backward calibrated curves, calibration defects, Aubry set
//!   detection, constrained-subsolution residuals, strict subsolutions by
//!   potential perturbation;
//! * [`flow`] - phase flow integration with Jacobian propagation, equilibria
//!   and eigenvalues, sublevel regions and global attractor approximation.

pub mod aubry;
pub mod error;
pub mod flow;
pub mod grid;
pub mod model;
pub mod semigroup;

pub(crate) mod util;

/// Flat-torus arithmetic shared by consumers of the solver outputs.
pub mod torus {
    pub use crate::util::{circ_diff, golden_min, torus_dist, wrap01, wrap_point};
}

pub use error::{AubryError, FlowError, GridError, ModelError, SemigroupError};
