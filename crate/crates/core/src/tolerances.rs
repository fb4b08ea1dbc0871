use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by all modules.
///
/// Fields suffixed `_rel` are scaled by `1 + |·|` of the relevant quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Legendre consistency of the H/L pair.
    pub tol_dual: f64,
    /// Integrator accuracy target per unit time.
    pub tol_ode: f64,
    /// Lower bound for `|(X_z θ, P_z θ, U_z θ)|` along a trajectory.
    pub tol_nonvanish: f64,
    /// Fixed RK4 step.
    pub dt: f64,
    /// Shooting convergence `|X(t;z) - x| <= tol_shoot_rel (1 + |x|)`.
    pub tol_shoot_rel: f64,
    pub newton_max_iter: usize,
    /// Root deduplication radius as a fraction of the search-box width.
    pub dedupe_rel: f64,
    /// Minimizer tie tolerance, relative to `1 + |u|`.
    pub tie_rel: f64,
    /// `|det X_z| <= tol_conj` counts as conjugate.
    pub tol_conj: f64,
    /// Bisection width for conjugate times.
    pub tol_time: f64,
    /// Branch-equality tolerance along singular curves, relative to `1 + |u|`.
    pub tol_sing_rel: f64,
    /// Interiority margin of simplex coefficients.
    pub tol_ri: f64,
    /// KKT residual of the energy minimisation.
    pub tol_kkt: f64,
    /// Smallest admissible singular value of gradient differences.
    pub tol_rank: f64,
    /// Support-value tolerance when extracting exposed faces.
    pub face_tol: f64,
    /// Branch consistency `p_i = P(t; z_i)`, `q_i = -H`.
    pub tol_branch: f64,
    /// Accepted negativity of the second variation.
    pub tol_j: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_dual: 1e-8,
            tol_ode: 1e-8,
            tol_nonvanish: 1e-10,
            dt: 1e-2,
            tol_shoot_rel: 1e-10,
            newton_max_iter: 40,
            dedupe_rel: 1e-4,
            tie_rel: 1e-7,
            tol_conj: 1e-7,
            tol_time: 1e-10,
            tol_sing_rel: 1e-7,
            tol_ri: 1e-6,
            tol_kkt: 1e-9,
            tol_rank: 1e-9,
            face_tol: 1e-6,
            tol_branch: 1e-8,
            tol_j: 1e-8,
        }
    }
}

impl Tolerances {
    /// Fixed-step policy with step `dt`.
    pub fn policy(&self) -> crate::flow::StepPolicy {
        crate::flow::StepPolicy::Fixed { dt: self.dt }
    }

    pub fn shoot_tol(&self, x_norm: f64) -> f64 {
        self.tol_shoot_rel * (1.0 + x_norm)
    }

    pub fn tie_tol(&self, u: f64) -> f64 {
        self.tie_rel * (1.0 + u.abs())
    }

    pub fn sing_tol(&self, u: f64) -> f64 {
        self.tol_sing_rel * (1.0 + u.abs())
    }

    /// Checks that every tolerance is positive and finite.
    pub fn validate(&self) -> crate::Result<()> {
        let named = [
            ("tol_dual", self.tol_dual),
            ("tol_ode", self.tol_ode),
            ("tol_nonvanish", self.tol_nonvanish),
            ("dt", self.dt),
            ("tol_shoot_rel", self.tol_shoot_rel),
            ("dedupe_rel", self.dedupe_rel),
            ("tie_rel", self.tie_rel),
            ("tol_conj", self.tol_conj),
            ("tol_time", self.tol_time),
            ("tol_sing_rel", self.tol_sing_rel),
            ("tol_ri", self.tol_ri),
            ("tol_kkt", self.tol_kkt),
            ("tol_rank", self.tol_rank),
            ("face_tol", self.face_tol),
            ("tol_branch", self.tol_branch),
            ("tol_j", self.tol_j),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(crate::Error::InvalidInput(format!(
                    "tolerance {name} must be positive, got {v}"
                )));
            }
        }
        if self.newton_max_iter == 0 {
            return Err(crate::Error::InvalidInput(
                "tolerance newton_max_iter must be positive".into(),
            ));
        }
        Ok(())
    }
}
