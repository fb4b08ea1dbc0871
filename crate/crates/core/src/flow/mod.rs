//! Characteristic system, variational equation and Carathéodory equation.
//!
//! Along a characteristic seeded at `z`
//!
//! ```text
//! Ẋ = H_p,   Ṗ = −H_x − H_u P,   U̇ = P·H_p − H,
//! X(0) = z,  P(0) = Du₀(z),      U(0) = u₀(z),
//! ```
//!
//! and the seed derivatives `(X_z, P_z, U_z)` solve the linearised system
//! with `X_z(0) = I`, `P_z(0) = D²u₀(z)`, `U_z(0) = Du₀(z)`.

mod curve;
mod ode;
mod trajectory;

pub use curve::{
    caratheodory_solve, caratheodory_solve_with, herglotz_residual, CaratheodoryResult,
    HerglotzResidual, SampledCurve,
};
pub use ode::StepPolicy;
pub use trajectory::{
    bump_jacobian, flow_terminal, flow_terminal_from, initial_state, initial_var_state, integrate_lie,
    integrate_lie_from, integrate_variational, integrate_variational_from,
    integrate_variational_with_breaks, CharState, CharTrajectory, TrajectoryBounds, VarState,
    VarTrajectory,
};
