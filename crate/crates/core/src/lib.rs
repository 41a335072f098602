//! Discrete obstacle problems and the two-membranes iteration.
//!
//! The crate works on uniform grids over the unit interval or unit square and
//! provides:
//!
//! * [`operators`]: the p-Dirichlet energy with a source term, its gradient,
//!   the divergence-form p-Laplacian residual, and a monotone min–max
//!   discretization of the normalized p-Laplacian `-βΔw - αΔ∞w + h`.
//! * [`variational`] and [`viscosity`]: obstacle solvers from below and from
//!   above (PSOR, projected gradient with Armijo backtracking, and a clamped
//!   Gauss–Seidel fixed point for the non-divergence family).
//! * [`membranes`]: the monotone alternating iteration between an obstacle
//!   problem from below and one from above, whose limit solves the
//!   two-membranes system `min{L₁u, u−v} = 0`, `max{L₂v, v−u} = 0`.
//! * [`verify`]: executable audits (complementarity, monotone traces,
//!   cross-backend agreement, grid refinement).
//!
//! Sign convention throughout: `L w = -Δ_p w + h`, so supersolutions have a
//! nonnegative residual and lie above solutions.

pub mod error;
pub mod expr;
pub mod grid;
pub mod membranes;
pub mod obstacle;
pub mod operators;
pub mod variational;
pub mod verify;
pub mod viscosity;

pub use error::{Error, Result};
pub use expr::Expr;
pub use grid::{Grid, ScalarField};
pub use membranes::{iterate, IterationTrace, MembraneConfig, Mode};
pub use obstacle::{dualize, solve, ObstacleProblem, Side, SolveReport, SolverSettings};
pub use operators::{classify, Classification, OperatorSpec};
