//! Value function by multi-start shooting, the fundamental solution `h_L` by
//! direct curve optimisation, and dynamic-programming checks.

mod certificates;
mod fundamental;
mod shooting;

pub use certificates::{dpp_certificate, semiconcavity_probe, DppCertificate, SemiconcavityReport};
pub use fundamental::{
    fundamental_solution, fundamental_solution_free, fundamental_solution_refined,
    FreeEndpointResult, FundamentalSolutionResult, RefinedFundamental,
};
pub use shooting::{
    default_box, default_grid_per_dim, newton_root, shoot_minimizers, value, MinimizerEntry,
    MinimizerSet, NewtonRoot,
};
