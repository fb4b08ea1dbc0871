//! Lax–Friedrichs finite differences for `u_t + H(t, x, Du, u) = 0` on
//! boxes in one and two dimensions.
//!
//! The solver is deliberately independent of the characteristic machinery
//! so that it can cross-check values and the location of kinks. It is
//! first order, explicit in time, and freezes the `u` dependence of `H`
//! within each step.

mod analysis;
mod lf;

pub use analysis::{compare, detect_singular_grid, CompareStats, KinkSlice};
pub use lf::{lf_solve, lf_solve_with, suggest_dt, GridSolution, LfOptions};
