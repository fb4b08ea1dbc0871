use std::fmt::Debug;
use std::sync::Arc;

use super::jet::{
    fd_gradient, fd_hessian, stack, unstack, HamiltonianJet, LagrangianJet, FD_FIRST_SCALE,
    FD_SECOND_SCALE,
};
use super::polynomial::Polynomial;
use crate::{Error, Matrix, Result, Vector};

/// A Hamiltonian `H(t, x, p, u)`, strictly convex in `p`.
pub trait Hamiltonian: Debug + Send + Sync {
    fn value(&self, t: f64, x: &Vector, p: &Vector, u: f64) -> f64;

    /// Closed-form jet of the requested order, if available.
    fn jet(&self, _t: f64, _x: &Vector, _p: &Vector, _u: f64, _order: u8) -> Option<HamiltonianJet> {
        None
    }
}

/// A Lagrangian `L(t, x, v, u)`.
pub trait Lagrangian: Debug + Send + Sync {
    fn value(&self, t: f64, x: &Vector, v: &Vector, u: f64) -> f64;

    fn jet(&self, _t: f64, _x: &Vector, _v: &Vector, _u: f64, _order: u8) -> Option<LagrangianJet> {
        None
    }
}

/// Central-difference jet of a Hamiltonian from values only.
pub fn fd_hamiltonian_jet(h: &dyn Hamiltonian, t: f64, x: &Vector, p: &Vector, u: f64, order: u8) -> HamiltonianJet {
    let n = x.len();
    let w = stack(x, p, u);
    let f = |w: &Vector| {
        let (x, p, u) = unstack(w);
        h.value(t, &x, &p, u)
    };
    let value = f(&w);
    let g = (order >= 1).then(|| fd_gradient(&f, &w, FD_FIRST_SCALE));
    let hh = (order >= 2).then(|| fd_hessian(&f, &w, FD_SECOND_SCALE));
    HamiltonianJet::from_stacked(n, order, value, g.as_ref(), hh.as_ref())
}

pub fn fd_lagrangian_jet(l: &dyn Lagrangian, t: f64, x: &Vector, v: &Vector, u: f64, order: u8) -> LagrangianJet {
    let n = x.len();
    let w = stack(x, v, u);
    let f = |w: &Vector| {
        let (x, v, u) = unstack(w);
        l.value(t, &x, &v, u)
    };
    let value = f(&w);
    let g = (order >= 1).then(|| fd_gradient(&f, &w, FD_FIRST_SCALE));
    let hh = (order >= 2).then(|| fd_hessian(&f, &w, FD_SECOND_SCALE));
    LagrangianJet::from_stacked(n, order, value, g.as_ref(), hh.as_ref())
}

/// `|p|²/2 + λ u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticHamiltonian {
    pub lambda: f64,
}

impl Hamiltonian for QuadraticHamiltonian {
    fn value(&self, _t: f64, _x: &Vector, p: &Vector, u: f64) -> f64 {
        0.5 * p.norm_squared() + self.lambda * u
    }

    fn jet(&self, t: f64, x: &Vector, p: &Vector, u: f64, order: u8) -> Option<HamiltonianJet> {
        let n = p.len();
        let mut jet = HamiltonianJet::zeros(n, order, self.value(t, x, p, u));
        if order >= 1 {
            jet.h_p = p.clone();
            jet.h_u = self.lambda;
        }
        if order >= 2 {
            jet.h_pp = Matrix::identity(n, n);
        }
        Some(jet)
    }
}

/// `|v|²/2 − λ u`, the Legendre dual of [`QuadraticHamiltonian`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticLagrangian {
    pub lambda: f64,
}

impl Lagrangian for QuadraticLagrangian {
    fn value(&self, _t: f64, _x: &Vector, v: &Vector, u: f64) -> f64 {
        0.5 * v.norm_squared() - self.lambda * u
    }

    fn jet(&self, t: f64, x: &Vector, v: &Vector, u: f64, order: u8) -> Option<LagrangianJet> {
        let n = v.len();
        let mut jet = LagrangianJet::zeros(n, order, self.value(t, x, v, u));
        if order >= 1 {
            jet.l_v = v.clone();
            jet.l_u = -self.lambda;
        }
        if order >= 2 {
            jet.l_vv = Matrix::identity(n, n);
        }
        Some(jet)
    }
}

/// Hamiltonian given as a polynomial in the stacked variable `(x, p, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialHamiltonian {
    pub n: usize,
    pub poly: Polynomial,
}

impl PolynomialHamiltonian {
    pub fn new(n: usize, poly: Polynomial) -> Result<Self> {
        if poly.nvars != 2 * n + 1 {
            return Err(Error::InvalidInput(format!(
                "Hamiltonian polynomial must have 2n+1 = {} variables (x, p, u), found {}",
                2 * n + 1,
                poly.nvars
            )));
        }
        Ok(Self { n, poly })
    }
}

impl Hamiltonian for PolynomialHamiltonian {
    fn value(&self, t: f64, x: &Vector, p: &Vector, u: f64) -> f64 {
        self.poly.eval(t, stack(x, p, u).as_slice())
    }

    fn jet(&self, t: f64, x: &Vector, p: &Vector, u: f64, order: u8) -> Option<HamiltonianJet> {
        let w = stack(x, p, u);
        let g = (order >= 1).then(|| self.poly.gradient(t, w.as_slice()));
        let h = (order >= 2).then(|| self.poly.hessian(t, w.as_slice()));
        Some(HamiltonianJet::from_stacked(
            self.n,
            order,
            self.poly.eval(t, w.as_slice()),
            g.as_ref(),
            h.as_ref(),
        ))
    }
}

/// Lagrangian given as a polynomial in `(x, v, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialLagrangian {
    pub n: usize,
    pub poly: Polynomial,
}

impl PolynomialLagrangian {
    pub fn new(n: usize, poly: Polynomial) -> Result<Self> {
        if poly.nvars != 2 * n + 1 {
            return Err(Error::InvalidInput(format!(
                "Lagrangian polynomial must have 2n+1 = {} variables (x, v, u), found {}",
                2 * n + 1,
                poly.nvars
            )));
        }
        Ok(Self { n, poly })
    }
}

impl Lagrangian for PolynomialLagrangian {
    fn value(&self, t: f64, x: &Vector, v: &Vector, u: f64) -> f64 {
        self.poly.eval(t, stack(x, v, u).as_slice())
    }

    fn jet(&self, t: f64, x: &Vector, v: &Vector, u: f64, order: u8) -> Option<LagrangianJet> {
        let w = stack(x, v, u);
        let g = (order >= 1).then(|| self.poly.gradient(t, w.as_slice()));
        let h = (order >= 2).then(|| self.poly.hessian(t, w.as_slice()));
        Some(LagrangianJet::from_stacked(
            self.n,
            order,
            self.poly.eval(t, w.as_slice()),
            g.as_ref(),
            h.as_ref(),
        ))
    }
}

/// Numerical Legendre transform `L(t,x,v,u) = sup_p { p·v − H(t,x,p,u) }`.
///
/// The maximiser `p*` solves `H_p(t,x,p*,u) = v` by Newton's method; the
/// derivatives of `L` follow from the envelope theorem and the implicit
/// derivative of `p*`.
#[derive(Debug, Clone)]
pub struct DualLagrangian {
    pub hamiltonian: Arc<dyn Hamiltonian>,
    pub max_iter: usize,
    pub tol: f64,
}

impl DualLagrangian {
    pub fn new(hamiltonian: Arc<dyn Hamiltonian>) -> Self {
        Self {
            hamiltonian,
            max_iter: 60,
            tol: 1e-13,
        }
    }

    fn h_jet(&self, t: f64, x: &Vector, p: &Vector, u: f64, order: u8) -> HamiltonianJet {
        self.hamiltonian
            .jet(t, x, p, u, order)
            .unwrap_or_else(|| fd_hamiltonian_jet(self.hamiltonian.as_ref(), t, x, p, u, order))
    }

    /// Dual momentum `p*` with `H_p(t, x, p*, u) = v`.
    pub fn momentum(&self, t: f64, x: &Vector, v: &Vector, u: f64) -> Option<Vector> {
        let mut p = v.clone();
        for _ in 0..self.max_iter {
            let jet = self.h_jet(t, x, &p, u, 2);
            let r = &jet.h_p - v;
            if r.amax() <= self.tol * (1.0 + v.amax()) {
                return Some(p);
            }
            let step = jet.h_pp.clone().cholesky()?.solve(&r);
            // Backtrack on the concave objective p·v − H.
            let objective = |q: &Vector| q.dot(v) - self.hamiltonian.value(t, x, q, u);
            let f0 = objective(&p);
            let mut alpha = 1.0;
            let mut next = &p - &step * alpha;
            while objective(&next) < f0 - 1e-14 * (1.0 + f0.abs()) && alpha > 1e-6 {
                alpha *= 0.5;
                next = &p - &step * alpha;
            }
            p = next;
        }
        let r = &self.h_jet(t, x, &p, u, 1).h_p - v;
        (r.amax() <= 1e3 * self.tol * (1.0 + v.amax())).then_some(p)
    }
}

impl Lagrangian for DualLagrangian {
    fn value(&self, t: f64, x: &Vector, v: &Vector, u: f64) -> f64 {
        match self.momentum(t, x, v, u) {
            Some(p) => p.dot(v) - self.hamiltonian.value(t, x, &p, u),
            None => f64::NAN,
        }
    }

    fn jet(&self, t: f64, x: &Vector, v: &Vector, u: f64, order: u8) -> Option<LagrangianJet> {
        let n = x.len();
        let Some(p) = self.momentum(t, x, v, u) else {
            return Some(LagrangianJet::zeros(n, order, f64::NAN));
        };
        let h = self.h_jet(t, x, &p, u, order.max(1));
        let mut jet = LagrangianJet::zeros(n, order, p.dot(v) - h.value);
        if order >= 1 {
            jet.l_v = p.clone();
            jet.l_x = -&h.h_x;
            jet.l_u = -h.h_u;
        }
        if order >= 2 {
            let Some(chol) = h.h_pp.clone().cholesky() else {
                return Some(LagrangianJet::zeros(n, order, f64::NAN));
            };
            let inv = chol.inverse();
            let dp_dx = -(&inv * &h.h_px);
            let dp_du = -(&inv * &h.h_pu);
            jet.l_vv = inv;
            jet.l_xv = dp_dx.transpose();
            jet.l_vu = dp_du;
            let h_xp = h.h_px.transpose();
            jet.l_xx = -&h.h_xx - &h_xp * &dp_dx;
            jet.l_xu = -&h.h_xu - &h_xp * &jet.l_vu;
            jet.l_uu = -h.h_uu - h.h_pu.dot(&jet.l_vu);
        }
        Some(jet)
    }
}
