//! Method of characteristics for contact-type Hamilton–Jacobi equations
//!
//! ```text
//! u_t + H(t, x, Du, u) = 0,    u(0, ·) = u₀
//! ```
//!
//! with `H` strictly convex in the momentum. The crate is organised bottom-up:
//!
//! * [`problem`] – Hamiltonian/Lagrangian pairs, initial data and their jets.
//! * [`flow`] – the characteristic (Lie) system, its variational equation and
//!   the Carathéodory equation along arbitrary curves.
//! * [`bolza`] – the value function by multi-start shooting, the fundamental
//!   solution `h_L` by direct curve optimisation, dynamic-programming checks.
//! * [`cut_locus`] – regular / irregular / conjugate classification, local
//!   smooth branches, the accessory second variation and conjugate witnesses.
//! * [`singular`] – exposed faces of the superdifferential, minimal-energy
//!   elements and tracing of strict singular characteristics.
//! * [`grid_oracle`] – an independent Lax–Friedrichs solver used for
//!   cross-validation.

// `!(a > b)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod bolza;
pub mod cut_locus;
mod error;
pub mod flow;
pub mod grid_oracle;
mod linalg;
mod optimize;
pub mod problem;
pub mod singular;
mod tolerances;

pub use error::{Error, Result};
pub use tolerances::Tolerances;

/// Dense column vector used for points, momenta and seeds.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for Jacobians and Hessians.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Axis-aligned box in ℝⁿ.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AxisBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl AxisBox {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.is_empty() {
            return Err(Error::InvalidInput(format!(
                "box bounds have mismatched dimensions {} and {}",
                min.len(),
                max.len()
            )));
        }
        for (i, (a, b)) in min.iter().zip(&max).enumerate() {
            if !(a.is_finite() && b.is_finite()) || a > b {
                return Err(Error::InvalidInput(format!(
                    "box axis {i}: min {a} must not exceed max {b}"
                )));
            }
        }
        Ok(Self { min, max })
    }

    pub fn centered(center: &Vector, half_width: f64) -> Self {
        Self {
            min: center.iter().map(|c| c - half_width).collect(),
            max: center.iter().map(|c| c + half_width).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Largest side length.
    pub fn width(&self) -> f64 {
        self.min
            .iter()
            .zip(&self.max)
            .map(|(a, b)| b - a)
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.min.iter().zip(&self.max))
                .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    /// Uniform tensor grid with `per_dim` nodes per axis, last axis fastest.
    pub fn grid(&self, per_dim: usize) -> Vec<Vector> {
        let n = self.dim();
        let per_dim = per_dim.max(1);
        let total = per_dim.pow(n as u32);
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut coords = vec![0.0; n];
            for axis in (0..n).rev() {
                let idx = rem % per_dim;
                rem /= per_dim;
                coords[axis] = if per_dim == 1 {
                    0.5 * (self.min[axis] + self.max[axis])
                } else {
                    self.min[axis]
                        + (self.max[axis] - self.min[axis]) * idx as f64 / (per_dim - 1) as f64
                };
            }
            out.push(Vector::from_vec(coords));
        }
        out
    }
}
