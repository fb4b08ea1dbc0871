//! Regular, irregular and conjugate points of the value function.
//!
//! A point `(t, x)` is irregular when it is reached by more than one
//! minimizing characteristic and conjugate when some minimizer has
//! `det X_z = 0` there. Off the conjugate locus the value function is the
//! minimum of finitely many smooth branches, which [`local_branches`]
//! extracts. The remaining tools probe the mechanics near conjugate
//! points: the second variation `J*`, its broken witness, and the blow-up
//! of `∇²u` along a focusing characteristic.

mod branches;
mod classify;
mod conjugate;
mod persistence;
mod second_variation;

pub use branches::{local_branches, solve_branch, Branch, BranchSet};
pub use classify::{classify_map, classify_point, Classification, PointKind};
pub use conjugate::{conjugate_time, ConjugateDetection, ConjugateTime};
pub use persistence::{persistence_probe, PersistenceDetector, PersistenceHit};
pub use second_variation::{
    accessory_second_variation, conjugate_witness, hessian_blowup_probe, ConjugateWitness, HessianSeries,
    Perturbation, SecondVariationReport,
};
