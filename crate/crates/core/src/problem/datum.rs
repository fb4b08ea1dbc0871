use serde::{Deserialize, Serialize};

use super::polynomial::Polynomial;
use crate::{Matrix, Vector};

/// Initial datum `u₀ : ℝⁿ → ℝ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDatum {
    Constant { c: f64 },
    /// `a·x`.
    Linear { a: Vec<f64> },
    /// `−c|x|²/2`.
    ConcaveQuadratic { c: f64 },
    /// `Σ_i −log(e^{x_i} + e^{−x_i})`.
    DoubleWell,
    Polynomial { poly: Polynomial },
    /// Pointwise minimum of smooth pieces; only used for non-smooth fixtures.
    MinOf { pieces: Vec<InitialDatum> },
}

fn log_two_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p()
}

impl InitialDatum {
    pub fn is_smooth(&self) -> bool {
        !matches!(self, InitialDatum::MinOf { .. })
    }

    /// Smooth pieces whose pointwise minimum is this datum.
    pub fn pieces(&self) -> Vec<InitialDatum> {
        match self {
            InitialDatum::MinOf { pieces } => pieces.iter().flat_map(|p| p.pieces()).collect(),
            other => vec![other.clone()],
        }
    }

    pub fn value(&self, z: &Vector) -> f64 {
        match self {
            InitialDatum::Constant { c } => *c,
            InitialDatum::Linear { a } => a.iter().zip(z.iter()).map(|(a, z)| a * z).sum(),
            InitialDatum::ConcaveQuadratic { c } => -0.5 * c * z.norm_squared(),
            InitialDatum::DoubleWell => -z.iter().map(|&zi| log_two_cosh(zi)).sum::<f64>(),
            InitialDatum::Polynomial { poly } => poly.eval(0.0, z.as_slice()),
            InitialDatum::MinOf { pieces } => pieces
                .iter()
                .map(|p| p.value(z))
                .fold(f64::INFINITY, f64::min),
        }
    }

    fn active_piece(&self, z: &Vector) -> &InitialDatum {
        match self {
            InitialDatum::MinOf { pieces } => pieces
                .iter()
                .min_by(|a, b| a.value(z).total_cmp(&b.value(z)))
                .map(|p| p.active_piece(z))
                .unwrap_or(self),
            other => other,
        }
    }

    /// `Du₀(z)`; for [`InitialDatum::MinOf`] the gradient of the active piece.
    pub fn gradient(&self, z: &Vector) -> Vector {
        let n = z.len();
        match self.active_piece(z) {
            InitialDatum::Constant { .. } | InitialDatum::MinOf { .. } => Vector::zeros(n),
            InitialDatum::Linear { a } => Vector::from_vec(a.clone()),
            InitialDatum::ConcaveQuadratic { c } => z * (-c),
            InitialDatum::DoubleWell => z.map(|zi| -zi.tanh()),
            InitialDatum::Polynomial { poly } => poly.gradient(0.0, z.as_slice()),
        }
    }

    pub fn hessian(&self, z: &Vector) -> Matrix {
        let n = z.len();
        match self.active_piece(z) {
            InitialDatum::Constant { .. } | InitialDatum::Linear { .. } | InitialDatum::MinOf { .. } => {
                Matrix::zeros(n, n)
            }
            InitialDatum::ConcaveQuadratic { c } => Matrix::identity(n, n) * (-c),
            InitialDatum::DoubleWell => {
                Matrix::from_diagonal(&z.map(|zi| -1.0 / zi.cosh().powi(2)))
            }
            InitialDatum::Polynomial { poly } => poly.hessian(0.0, z.as_slice()),
        }
    }

    /// Dimension implied by the datum, if it fixes one.
    pub fn dim_hint(&self) -> Option<usize> {
        match self {
            InitialDatum::Linear { a } => Some(a.len()),
            InitialDatum::Polynomial { poly } => Some(poly.nvars),
            InitialDatum::MinOf { pieces } => pieces.iter().find_map(|p| p.dim_hint()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_well_is_stable_for_large_arguments() {
        let d = InitialDatum::DoubleWell;
        let z = Vector::from_vec(vec![800.0]);
        assert!((d.value(&z) + 800.0).abs() < 1e-12);
        let z = Vector::from_vec(vec![0.0]);
        assert!((d.value(&z) + 2f64.ln()).abs() < 1e-15);
        assert_eq!(d.hessian(&z)[(0, 0)], -1.0);
    }

    #[test]
    fn min_of_selects_active_piece() {
        let d = InitialDatum::MinOf {
            pieces: vec![
                InitialDatum::Linear { a: vec![1.0] },
                InitialDatum::Linear { a: vec![-1.0] },
            ],
        };
        let z = Vector::from_vec(vec![2.0]);
        assert_eq!(d.value(&z), -2.0);
        assert_eq!(d.gradient(&z)[0], -1.0);
        assert!(!d.is_smooth());
        assert_eq!(d.pieces().len(), 2);
    }
}
