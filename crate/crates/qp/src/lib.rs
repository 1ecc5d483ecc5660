//! Convex quadratic programming with two-sided linear constraints.
//!
//! Problems have the form
//!
//! ```text
//! minimize    sum_i w_i x_i^2 + c^T x
//! subject to  l <= A x <= u
//! ```
//!
//! with `w > 0`, so the minimizer is unique. The solver is an ADMM
//! (alternating direction method of multipliers) iteration on the
//! splitting `z = A x`, with Ruiz equilibration, over-relaxation, adaptive
//! penalty and an active-set polish.

mod dump;
mod problem;
mod residuals;
mod solver;
mod sparse;

pub use dump::write_problem;
pub use problem::{QpError, QuadraticProgram};
pub use residuals::kkt_residuals;
pub use solver::{QpSolution, Settings, Solver, Status, WarmStart};
pub use sparse::CsrMatrix;
