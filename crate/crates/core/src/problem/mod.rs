//! Problem definition: the Hamiltonian/Lagrangian pair, the initial datum and
//! their derivative jets.
//!
//! All evaluators are pure, so a [`ProblemSpec`] can be shared read-only
//! between worker threads.

mod datum;
mod functions;
mod jet;
mod polynomial;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use datum::InitialDatum;
pub use functions::{
    fd_hamiltonian_jet, fd_lagrangian_jet, DualLagrangian, Hamiltonian, Lagrangian,
    PolynomialHamiltonian, PolynomialLagrangian, QuadraticHamiltonian, QuadraticLagrangian,
};
pub use jet::{fd_gradient, fd_hessian, HamiltonianJet, LagrangianJet, FD_FIRST_SCALE, FD_SECOND_SCALE};
pub use polynomial::{Monomial, Polynomial};

use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    #[default]
    ClosedForm,
    FiniteDifference,
}

/// Built-in test families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BuiltInFamily {
    /// `H = |p|²/2`, `L = |v|²/2`.
    ClassicalQuadratic,
    /// `H = |p|²/2 + λ u`, `L = |v|²/2 − λ u`, `λ > 0`.
    ContactDiscounted { lambda: f64 },
    /// Classical Hamiltonian with `u₀ = −c|x|²/2`.
    Focusing { c: f64 },
    /// Polynomial `H` in `(x, p, u)`; `L` is the supplied polynomial in
    /// `(x, v, u)` or the numerical Legendre dual when absent.
    CustomPolynomial {
        hamiltonian: Polynomial,
        #[serde(default)]
        lagrangian: Option<Polynomial>,
    },
}

/// A contact Hamilton–Jacobi problem `u_t + H(t, x, Du, u) = 0`, `u(0) = u₀`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub n: usize,
    pub hamiltonian: Arc<dyn Hamiltonian>,
    pub lagrangian: Arc<dyn Lagrangian>,
    pub initial_datum: InitialDatum,
    pub smoothness_order: u32,
    pub derivative_mode: DerivativeMode,
    /// Legendre-consistency tolerance used by [`ProblemSpec::validate`].
    pub tol_dual: f64,
}

/// Legendre-duality defects at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LegendreResidual {
    /// `|L(t,x,H_p,u) − (p·H_p − H)|`.
    pub value: f64,
    /// `|L_v(t,x,H_p,u) − p|∞`.
    pub momentum: f64,
}

/// Summary of [`ProblemSpec::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub max_legendre: f64,
    pub max_momentum: f64,
    pub min_hpp_eigenvalue: f64,
    /// Largest first-order discrepancy between closed-form and
    /// finite-difference partials (`None` when no closed form exists).
    pub fd_first_gap: Option<f64>,
    pub fd_second_gap: Option<f64>,
}

impl ProblemSpec {
    pub fn new(
        n: usize,
        hamiltonian: Arc<dyn Hamiltonian>,
        lagrangian: Arc<dyn Lagrangian>,
        initial_datum: InitialDatum,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("dimension n must be positive".into()));
        }
        if let Some(d) = initial_datum.dim_hint() {
            if d != n {
                return Err(Error::InvalidInput(format!(
                    "initial datum has dimension {d}, problem has n = {n}"
                )));
            }
        }
        Ok(Self {
            n,
            hamiltonian,
            lagrangian,
            initial_datum,
            smoothness_order: 2,
            derivative_mode: DerivativeMode::ClosedForm,
            tol_dual: 1e-8,
        })
    }

    pub fn from_family(family: &BuiltInFamily, n: usize, datum: InitialDatum) -> Result<Self> {
        match family {
            BuiltInFamily::ClassicalQuadratic => Self::classical(n, datum),
            BuiltInFamily::ContactDiscounted { lambda } => Self::contact(n, *lambda, datum),
            BuiltInFamily::Focusing { c } => Self::focusing(n, *c),
            BuiltInFamily::CustomPolynomial {
                hamiltonian,
                lagrangian,
            } => {
                let h: Arc<dyn Hamiltonian> =
                    Arc::new(PolynomialHamiltonian::new(n, hamiltonian.clone())?);
                let l: Arc<dyn Lagrangian> = match lagrangian {
                    Some(poly) => Arc::new(PolynomialLagrangian::new(n, poly.clone())?),
                    None => Arc::new(DualLagrangian::new(h.clone())),
                };
                Self::new(n, h, l, datum)
            }
        }
    }

    pub fn classical(n: usize, datum: InitialDatum) -> Result<Self> {
        Self::new(
            n,
            Arc::new(QuadraticHamiltonian { lambda: 0.0 }),
            Arc::new(QuadraticLagrangian { lambda: 0.0 }),
            datum,
        )
    }

    pub fn contact(n: usize, lambda: f64, datum: InitialDatum) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidInput(format!(
                "discount lambda must be positive, got {lambda}"
            )));
        }
        Self::new(
            n,
            Arc::new(QuadraticHamiltonian { lambda }),
            Arc::new(QuadraticLagrangian { lambda }),
            datum,
        )
    }

    pub fn focusing(n: usize, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidInput(format!(
                "focusing curvature c must be positive, got {c}"
            )));
        }
        Self::classical(n, InitialDatum::ConcaveQuadratic { c })
    }

    pub fn with_datum(&self, datum: InitialDatum) -> Self {
        let mut s = self.clone();
        s.initial_datum = datum;
        s
    }

    pub fn with_derivative_mode(mut self, mode: DerivativeMode) -> Self {
        self.derivative_mode = mode;
        self
    }

    /// One problem per smooth piece of the initial datum.
    pub fn sheets(&self) -> Vec<ProblemSpec> {
        self.initial_datum
            .pieces()
            .into_iter()
            .map(|d| self.with_datum(d))
            .collect()
    }

    pub fn u0(&self, z: &Vector) -> f64 {
        self.initial_datum.value(z)
    }

    pub fn du0(&self, z: &Vector) -> Vector {
        self.initial_datum.gradient(z)
    }

    pub fn d2u0(&self, z: &Vector) -> Matrix {
        self.initial_datum.hessian(z)
    }

    fn check_args(&self, x: &Vector, y: &Vector, order: u8) -> Result<()> {
        if order > 2 {
            return Err(Error::InvalidInput(format!("jet order {order} exceeds 2")));
        }
        if x.len() != self.n || y.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "expected {}-vectors, got lengths {} and {}",
                self.n,
                x.len(),
                y.len()
            )));
        }
        Ok(())
    }

    pub fn hamiltonian_jet(&self, t: f64, x: &Vector, p: &Vector, u: f64, order: u8) -> Result<HamiltonianJet> {
        self.check_args(x, p, order)?;
        let h = self.hamiltonian.as_ref();
        let jet = match self.derivative_mode {
            DerivativeMode::ClosedForm => h
                .jet(t, x, p, u, order)
                .unwrap_or_else(|| fd_hamiltonian_jet(h, t, x, p, u, order)),
            DerivativeMode::FiniteDifference => fd_hamiltonian_jet(h, t, x, p, u, order),
        };
        jet.check_finite(t)?;
        Ok(jet)
    }

    pub fn lagrangian_jet(&self, t: f64, x: &Vector, v: &Vector, u: f64, order: u8) -> Result<LagrangianJet> {
        self.check_args(x, v, order)?;
        let l = self.lagrangian.as_ref();
        let jet = match self.derivative_mode {
            DerivativeMode::ClosedForm => l
                .jet(t, x, v, u, order)
                .unwrap_or_else(|| fd_lagrangian_jet(l, t, x, v, u, order)),
            DerivativeMode::FiniteDifference => fd_lagrangian_jet(l, t, x, v, u, order),
        };
        jet.check_finite(t)?;
        Ok(jet)
    }

    pub fn h(&self, t: f64, x: &Vector, p: &Vector, u: f64) -> f64 {
        self.hamiltonian.value(t, x, p, u)
    }

    pub fn l(&self, t: f64, x: &Vector, v: &Vector, u: f64) -> f64 {
        self.lagrangian.value(t, x, v, u)
    }

    /// `H_p(t, x, p, u)`.
    pub fn velocity(&self, t: f64, x: &Vector, p: &Vector, u: f64) -> Result<Vector> {
        Ok(self.hamiltonian_jet(t, x, p, u, 1)?.h_p)
    }

    pub fn legendre_residual(&self, t: f64, x: &Vector, p: &Vector, u: f64) -> Result<LegendreResidual> {
        let h = self.hamiltonian_jet(t, x, p, u, 1)?;
        let l = self.lagrangian_jet(t, x, &h.h_p, u, 1)?;
        Ok(LegendreResidual {
            value: (l.value - (p.dot(&h.h_p) - h.value)).abs(),
            momentum: (&l.l_v - p).amax(),
        })
    }

    /// Samples `samples` points in `[0,2] × [−2,2]^{2n+1}` and checks strict
    /// convexity, Legendre consistency and finite-difference agreement.
    pub fn validation_report(&self, samples: usize, seed: u64) -> Result<ValidationReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = ValidationReport {
            samples,
            max_legendre: 0.0,
            max_momentum: 0.0,
            min_hpp_eigenvalue: f64::INFINITY,
            fd_first_gap: None,
            fd_second_gap: None,
        };
        let h = self.hamiltonian.as_ref();
        for _ in 0..samples {
            let t = rng.gen_range(0.0..2.0);
            let x = Vector::from_fn(self.n, |_, _| rng.gen_range(-2.0..2.0));
            let p = Vector::from_fn(self.n, |_, _| rng.gen_range(-2.0..2.0));
            let u = rng.gen_range(-2.0..2.0);
            let jet = self.hamiltonian_jet(t, &x, &p, u, 2)?;
            if jet.h_pp.clone().cholesky().is_none() {
                return Err(Error::NotConvex { t });
            }
            let eig = jet.h_pp.clone().symmetric_eigen().eigenvalues.min();
            report.min_hpp_eigenvalue = report.min_hpp_eigenvalue.min(eig);
            let r = self.legendre_residual(t, &x, &p, u)?;
            report.max_legendre = report.max_legendre.max(r.value);
            report.max_momentum = report.max_momentum.max(r.momentum);
            if let Some(exact) = h.jet(t, &x, &p, u, 2) {
                let fd = fd_hamiltonian_jet(h, t, &x, &p, u, 2);
                let g1 = (&exact.h_p - &fd.h_p)
                    .amax()
                    .max((&exact.h_x - &fd.h_x).amax())
                    .max((exact.h_u - fd.h_u).abs());
                let g2 = (&exact.h_pp - &fd.h_pp)
                    .amax()
                    .max((&exact.h_px - &fd.h_px).amax())
                    .max((&exact.h_xx - &fd.h_xx).amax())
                    .max((&exact.h_pu - &fd.h_pu).amax())
                    .max((&exact.h_xu - &fd.h_xu).amax())
                    .max((exact.h_uu - fd.h_uu).abs());
                report.fd_first_gap = Some(report.fd_first_gap.unwrap_or(0.0).max(g1));
                report.fd_second_gap = Some(report.fd_second_gap.unwrap_or(0.0).max(g2));
            }
        }
        Ok(report)
    }

    /// Fails when `H_pp` is not positive definite somewhere or the Legendre
    /// residual exceeds `tol_dual` on the sample set.
    pub fn validate(&self) -> Result<ValidationReport> {
        if self.smoothness_order < 2 {
            return Err(Error::InvalidInput(format!(
                "smoothness order must be at least 2, got {}",
                self.smoothness_order
            )));
        }
        let report = self.validation_report(100, 0x5eed)?;
        if report.max_legendre > self.tol_dual || report.max_momentum > self.tol_dual.sqrt() {
            return Err(Error::InvalidInput(format!(
                "Hamiltonian and Lagrangian are not Legendre dual (residual {:e}, momentum {:e})",
                report.max_legendre, report.max_momentum
            )));
        }
        Ok(report)
    }
}
