//! Dense linear algebra, least-squares residuals and the quadratic-inequality
//! calculus shared by every other module.
//!
//! Reductions run in a fixed left-to-right order so region endpoints are
//! bit-reproducible across runs.

mod covariance;
mod lstsq;
mod matrix;
mod quad;

pub use covariance::{BlockCovariance, CovBlock};
pub use lstsq::{residual_operator, rss, ColumnBasis, RCOND_THRESHOLD};
pub use matrix::{
    backward_substitute_transposed, cholesky, dot, forward_substitute, norm_sq, Matrix,
};
pub use quad::{
    local_component, quad_form_coeffs, solve_quad_system, IntervalSet, QuadInequality, Quadratic,
    Sense, COEFF_TOL, MERGE_TOL,
};
