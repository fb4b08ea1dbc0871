//! Sparse multivariate polynomials with time-dependent coefficients.

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result, Vector};

/// One term `c(t) · Π w_k^{e_k}` with `c(t) = Σ_j coeff[j] t^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub exponents: Vec<u32>,
    pub coeff: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub nvars: usize,
    pub terms: Vec<Monomial>,
}

fn powi(w: f64, e: u32) -> f64 {
    if e == 0 {
        1.0
    } else {
        w.powi(e as i32)
    }
}

impl Monomial {
    fn time_coeff(&self, t: f64) -> f64 {
        self.coeff.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    /// `∂^{d} Π w^e` for the multiset of variable indices in `diff`.
    fn derivative(&self, w: &[f64], diff: &[usize]) -> f64 {
        let mut e = self.exponents.clone();
        let mut factor = 1.0;
        for &k in diff {
            if e[k] == 0 {
                return 0.0;
            }
            factor *= e[k] as f64;
            e[k] -= 1;
        }
        factor * e.iter().zip(w).map(|(&ek, &wk)| powi(wk, ek)).product::<f64>()
    }
}

impl Polynomial {
    pub fn new(nvars: usize, terms: Vec<Monomial>) -> Result<Self> {
        for (i, term) in terms.iter().enumerate() {
            if term.exponents.len() != nvars {
                return Err(Error::InvalidInput(format!(
                    "polynomial term {i} has {} exponents, expected {nvars}",
                    term.exponents.len()
                )));
            }
            if term.coeff.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "polynomial term {i} has a non-finite coefficient"
                )));
            }
        }
        Ok(Self { nvars, terms })
    }

    /// Convenience constructor for constant-in-time coefficients.
    pub fn from_terms(nvars: usize, terms: &[(f64, Vec<u32>)]) -> Result<Self> {
        Self::new(
            nvars,
            terms
                .iter()
                .map(|(c, e)| Monomial {
                    exponents: e.clone(),
                    coeff: vec![*c],
                })
                .collect(),
        )
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|m| m.exponents.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, t: f64, w: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|m| m.time_coeff(t) * m.derivative(w, &[]))
            .sum()
    }

    pub fn gradient(&self, t: f64, w: &[f64]) -> Vector {
        let mut g = Vector::zeros(self.nvars);
        for m in &self.terms {
            let c = m.time_coeff(t);
            for k in 0..self.nvars {
                g[k] += c * m.derivative(w, &[k]);
            }
        }
        g
    }

    pub fn hessian(&self, t: f64, w: &[f64]) -> Matrix {
        let mut h = Matrix::zeros(self.nvars, self.nvars);
        for m in &self.terms {
            let c = m.time_coeff(t);
            for i in 0..self.nvars {
                for j in i..self.nvars {
                    let d = c * m.derivative(w, &[i, j]);
                    h[(i, j)] += d;
                    if i != j {
                        h[(j, i)] += d;
                    }
                }
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_gradient_hessian_of_cubic() {
        // q(w0, w1) = 2 w0^2 w1 - 3 w1 + t * w0
        let p = Polynomial::new(
            2,
            vec![
                Monomial { exponents: vec![2, 1], coeff: vec![2.0] },
                Monomial { exponents: vec![0, 1], coeff: vec![-3.0] },
                Monomial { exponents: vec![1, 0], coeff: vec![0.0, 1.0] },
            ],
        )
        .unwrap();
        let (t, w) = (0.5, [1.5, -2.0]);
        assert!((p.eval(t, &w) - (2.0 * 2.25 * -2.0 + 6.0 + 0.75)).abs() < 1e-14);
        let g = p.gradient(t, &w);
        assert!((g[0] - (4.0 * 1.5 * -2.0 + 0.5)).abs() < 1e-14);
        assert!((g[1] - (2.0 * 2.25 - 3.0)).abs() < 1e-14);
        let h = p.hessian(t, &w);
        assert!((h[(0, 0)] + 8.0).abs() < 1e-14);
        assert!((h[(0, 1)] - 6.0).abs() < 1e-14);
        assert_eq!(h[(0, 1)], h[(1, 0)]);
        assert_eq!(h[(1, 1)], 0.0);
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn rejects_wrong_arity() {
        assert!(Polynomial::from_terms(2, &[(1.0, vec![1])]).is_err());
    }
}
