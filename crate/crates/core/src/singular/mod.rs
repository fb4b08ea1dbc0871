//! Singular characteristics: curves along which the value function stays
//! non-differentiable.
//!
//! At an irregular point the superdifferential is the convex hull of the
//! branch gradients `Dv_i = (∂_t v_i, ∇v_i)`. The energy
//! `E = q + H(t, x, p, v_{k′})` has a unique minimizer on each
//! geometrically independent face, and its velocity `v̄ = H_p` drives the
//! strict singular characteristic `ẋ = v̄(t, x)`.

mod energy;
mod face;
mod sheets;
mod trace;

pub use energy::{minimal_energy_element, nondegeneracy_check, EnergyMinimum, NondegeneracyReport};
pub use face::{exposed_face, geometric_independence, FaceSelection, IndependenceReport};
pub use sheets::{BranchSheet, CharacteristicSheet, LinearDatumSheet, SheetSet};
pub use trace::{
    trace_backward, trace_forward, trace_two_branch, SingularCurve, SingularSample, StopReason, TraceDirection,
};
