use serde::Serialize;

use crate::{Error, Matrix, Result, Vector};

/// Value and partial derivatives of `H(t, x, p, u)`.
///
/// Partials above the requested order are left at zero. Mixed blocks follow
/// the convention `h_px[(i, j)] = ∂²H / ∂p_i ∂x_j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HamiltonianJet {
    pub order: u8,
    pub value: f64,
    pub h_p: Vector,
    pub h_x: Vector,
    pub h_u: f64,
    pub h_pp: Matrix,
    pub h_px: Matrix,
    pub h_pu: Vector,
    pub h_xx: Matrix,
    pub h_xu: Vector,
    pub h_uu: f64,
}

/// Value and partial derivatives of `L(t, x, v, u)`, with
/// `l_xv[(i, j)] = ∂²L / ∂x_i ∂v_j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LagrangianJet {
    pub order: u8,
    pub value: f64,
    pub l_v: Vector,
    pub l_x: Vector,
    pub l_u: f64,
    pub l_vv: Matrix,
    pub l_xv: Matrix,
    pub l_xx: Matrix,
    pub l_xu: Vector,
    pub l_vu: Vector,
    pub l_uu: f64,
}

impl HamiltonianJet {
    pub fn zeros(n: usize, order: u8, value: f64) -> Self {
        Self {
            order,
            value,
            h_p: Vector::zeros(n),
            h_x: Vector::zeros(n),
            h_u: 0.0,
            h_pp: Matrix::zeros(n, n),
            h_px: Matrix::zeros(n, n),
            h_pu: Vector::zeros(n),
            h_xx: Matrix::zeros(n, n),
            h_xu: Vector::zeros(n),
            h_uu: 0.0,
        }
    }

    /// Assembles a jet from the gradient and Hessian in the stacked variable
    /// `w = (x, p, u)`.
    pub fn from_stacked(n: usize, order: u8, value: f64, g: Option<&Vector>, h: Option<&Matrix>) -> Self {
        let mut jet = Self::zeros(n, order, value);
        if let Some(g) = g {
            jet.h_x = g.rows(0, n).into_owned();
            jet.h_p = g.rows(n, n).into_owned();
            jet.h_u = g[2 * n];
        }
        if let Some(h) = h {
            jet.h_xx = h.view((0, 0), (n, n)).into_owned();
            jet.h_px = h.view((n, 0), (n, n)).into_owned();
            jet.h_pp = h.view((n, n), (n, n)).into_owned();
            jet.h_xu = h.view((0, 2 * n), (n, 1)).column(0).into_owned();
            jet.h_pu = h.view((n, 2 * n), (n, 1)).column(0).into_owned();
            jet.h_uu = h[(2 * n, 2 * n)];
        }
        jet
    }

    pub(crate) fn check_finite(&self, t: f64) -> Result<()> {
        let named: [(&str, bool); 10] = [
            ("H", self.value.is_finite()),
            ("H_p", self.h_p.iter().all(|v| v.is_finite())),
            ("H_x", self.h_x.iter().all(|v| v.is_finite())),
            ("H_u", self.h_u.is_finite()),
            ("H_pp", self.h_pp.iter().all(|v| v.is_finite())),
            ("H_px", self.h_px.iter().all(|v| v.is_finite())),
            ("H_pu", self.h_pu.iter().all(|v| v.is_finite())),
            ("H_xx", self.h_xx.iter().all(|v| v.is_finite())),
            ("H_xu", self.h_xu.iter().all(|v| v.is_finite())),
            ("H_uu", self.h_uu.is_finite()),
        ];
        match named.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(Error::domain(*name, t)),
            None => Ok(()),
        }
    }
}

impl LagrangianJet {
    pub fn zeros(n: usize, order: u8, value: f64) -> Self {
        Self {
            order,
            value,
            l_v: Vector::zeros(n),
            l_x: Vector::zeros(n),
            l_u: 0.0,
            l_vv: Matrix::zeros(n, n),
            l_xv: Matrix::zeros(n, n),
            l_xx: Matrix::zeros(n, n),
            l_xu: Vector::zeros(n),
            l_vu: Vector::zeros(n),
            l_uu: 0.0,
        }
    }

    /// Assembles a jet from derivatives in the stacked variable `w = (x, v, u)`.
    pub fn from_stacked(n: usize, order: u8, value: f64, g: Option<&Vector>, h: Option<&Matrix>) -> Self {
        let mut jet = Self::zeros(n, order, value);
        if let Some(g) = g {
            jet.l_x = g.rows(0, n).into_owned();
            jet.l_v = g.rows(n, n).into_owned();
            jet.l_u = g[2 * n];
        }
        if let Some(h) = h {
            jet.l_xx = h.view((0, 0), (n, n)).into_owned();
            jet.l_xv = h.view((0, n), (n, n)).into_owned();
            jet.l_vv = h.view((n, n), (n, n)).into_owned();
            jet.l_xu = h.view((0, 2 * n), (n, 1)).column(0).into_owned();
            jet.l_vu = h.view((n, 2 * n), (n, 1)).column(0).into_owned();
            jet.l_uu = h[(2 * n, 2 * n)];
        }
        jet
    }

    pub(crate) fn check_finite(&self, t: f64) -> Result<()> {
        let named: [(&str, bool); 10] = [
            ("L", self.value.is_finite()),
            ("L_v", self.l_v.iter().all(|v| v.is_finite())),
            ("L_x", self.l_x.iter().all(|v| v.is_finite())),
            ("L_u", self.l_u.is_finite()),
            ("L_vv", self.l_vv.iter().all(|v| v.is_finite())),
            ("L_xv", self.l_xv.iter().all(|v| v.is_finite())),
            ("L_xx", self.l_xx.iter().all(|v| v.is_finite())),
            ("L_xu", self.l_xu.iter().all(|v| v.is_finite())),
            ("L_vu", self.l_vu.iter().all(|v| v.is_finite())),
            ("L_uu", self.l_uu.is_finite()),
        ];
        match named.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(Error::domain(*name, t)),
            None => Ok(()),
        }
    }
}

pub(crate) fn stack(x: &Vector, y: &Vector, u: f64) -> Vector {
    let n = x.len();
    let mut w = Vector::zeros(2 * n + 1);
    w.rows_mut(0, n).copy_from(x);
    w.rows_mut(n, n).copy_from(y);
    w[2 * n] = u;
    w
}

pub(crate) fn unstack(w: &Vector) -> (Vector, Vector, f64) {
    let n = (w.len() - 1) / 2;
    (w.rows(0, n).into_owned(), w.rows(n, n).into_owned(), w[2 * n])
}

/// Relative step scale for first-order central differences.
pub const FD_FIRST_SCALE: f64 = 1e-5;
/// Relative step scale for second-order differences.
pub const FD_SECOND_SCALE: f64 = 1e-4;

/// Central-difference gradient with step `scale · (1 + |w_k|)` per coordinate.
pub fn fd_gradient(f: &dyn Fn(&Vector) -> f64, w: &Vector, scale: f64) -> Vector {
    let mut g = Vector::zeros(w.len());
    let mut wk = w.clone();
    for k in 0..w.len() {
        let h = scale * (1.0 + w[k].abs());
        wk[k] = w[k] + h;
        let fp = f(&wk);
        wk[k] = w[k] - h;
        let fm = f(&wk);
        wk[k] = w[k];
        g[k] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Hessian from function values only.
pub fn fd_hessian(f: &dyn Fn(&Vector) -> f64, w: &Vector, scale: f64) -> Matrix {
    let d = w.len();
    let steps: Vec<f64> = w.iter().map(|v| scale * (1.0 + v.abs())).collect();
    let f0 = f(w);
    let mut h = Matrix::zeros(d, d);
    let mut wk = w.clone();
    for i in 0..d {
        wk[i] = w[i] + steps[i];
        let fp = f(&wk);
        wk[i] = w[i] - steps[i];
        let fm = f(&wk);
        wk[i] = w[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (steps[i] * steps[i]);
        for j in (i + 1)..d {
            let mut eval = |si: f64, sj: f64| {
                wk[i] = w[i] + si * steps[i];
                wk[j] = w[j] + sj * steps[j];
                let v = f(&wk);
                wk[i] = w[i];
                wk[j] = w[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * steps[i] * steps[j]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_matches_exact_derivatives_of_smooth_function() {
        let f = |w: &Vector| (w[0] * w[1]).sin() + w[2].exp() * w[0];
        let w = Vector::from_vec(vec![0.3, -0.7, 0.2]);
        let g = fd_gradient(&f, &w, FD_FIRST_SCALE);
        let c = (w[0] * w[1]).cos();
        let s = (w[0] * w[1]).sin();
        assert!((g[0] - (w[1] * c + w[2].exp())).abs() < 1e-9);
        assert!((g[1] - w[0] * c).abs() < 1e-9);
        assert!((g[2] - w[2].exp() * w[0]).abs() < 1e-9);
        let h = fd_hessian(&f, &w, FD_SECOND_SCALE);
        assert!((h[(0, 0)] + w[1] * w[1] * s).abs() < 1e-6);
        assert!((h[(0, 1)] - (c - w[0] * w[1] * s)).abs() < 1e-6);
        assert!((h[(0, 2)] - w[2].exp()).abs() < 1e-6);
        assert!((h[(2, 2)] - w[2].exp() * w[0]).abs() < 1e-6);
    }

    #[test]
    fn stacking_roundtrip() {
        let x = Vector::from_vec(vec![1.0, 2.0]);
        let p = Vector::from_vec(vec![3.0, 4.0]);
        let (a, b, c) = unstack(&stack(&x, &p, 5.0));
        assert_eq!((a, b, c), (x, p, 5.0));
    }
}
