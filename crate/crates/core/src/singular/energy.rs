use serde::Serialize;

use super::face::{geometric_independence, FaceSelection};
use crate::optimize::golden_section;
use crate::problem::ProblemSpec;
use crate::{Error, Matrix, Result, Tolerances, Vector};

/// Minimizer of `E(λ) = q̄(λ) + H(t, x, p̄(λ), u_ref)` over the simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyMinimum {
    /// Coefficients of the first `k′ − 1` active vertices; the last one
    /// carries `1 − Σλ`.
    pub lambda: Vector,
    /// Barycentric weights of all `k′` active vertices.
    pub mu: Vector,
    pub q: f64,
    pub p: Vector,
    /// `H_p(t, x, p̄, u_ref)`.
    pub v: Vector,
    pub interior: bool,
    /// Smallest barycentric weight (1 for a single vertex).
    pub margin: f64,
    /// Violation of the KKT conditions in barycentric coordinates.
    pub kkt_residual: f64,
    pub energy: f64,
    /// Smallest eigenvalue of `D²_λλ E`, `+∞` for a single vertex.
    pub hessian_min_eig: f64,
}

struct Energy<'a> {
    spec: &'a ProblemSpec,
    t: f64,
    x: &'a Vector,
    q: Vec<f64>,
    p: Vec<Vector>,
    u_ref: f64,
}

impl Energy<'_> {
    fn point(&self, mu: &[f64]) -> (f64, Vector) {
        let mut q = 0.0;
        let mut p = Vector::zeros(self.x.len());
        for (i, &m) in mu.iter().enumerate() {
            q += m * self.q[i];
            p += &self.p[i] * m;
        }
        (q, p)
    }

    fn value(&self, mu: &[f64]) -> f64 {
        let (q, p) = self.point(mu);
        q + self.spec.h(self.t, self.x, &p, self.u_ref)
    }

    fn derivatives(&self, mu: &[f64]) -> Result<(f64, Vector, Matrix)> {
        let (q, p) = self.point(mu);
        let jet = self.spec.hamiltonian_jet(self.t, self.x, &p, self.u_ref, 2)?;
        let k = mu.len();
        let g = Vector::from_fn(k, |i, _| self.q[i] + jet.h_p.dot(&self.p[i]));
        let hp: Vec<Vector> = self.p.iter().map(|pi| &jet.h_pp * pi).collect();
        let h = Matrix::from_fn(k, k, |i, j| self.p[i].dot(&hp[j]));
        Ok((q + jet.value, g, h))
    }
}

/// `max(|g_F + ν|, max_{i∉F}(−(g_i + ν))⁺)` with `ν = −mean(g_F)`.
fn kkt_residual(g: &Vector, free: &[bool]) -> (f64, f64) {
    let nf = free.iter().filter(|&&f| f).count().max(1);
    let nu = -(0..g.len()).filter(|&i| free[i]).map(|i| g[i]).sum::<f64>() / nf as f64;
    let r = (0..g.len())
        .map(|i| if free[i] { (g[i] + nu).abs() } else { (-(g[i] + nu)).max(0.0) })
        .fold(0.0, f64::max);
    (r, nu)
}

/// Active-set Newton on the simplex. Returns `None` when the reduced KKT
/// system is singular or the iteration does not settle.
fn active_set_newton(e: &Energy, mu0: Vec<f64>, kkt_tol: f64) -> Result<Option<Vec<f64>>> {
    let k = mu0.len();
    let mut mu = mu0;
    let mut free: Vec<bool> = mu.iter().map(|&m| m > 0.0).collect();
    for _ in 0..200 {
        let (f0, g, h) = e.derivatives(&mu)?;
        let idx: Vec<usize> = (0..k).filter(|&i| free[i]).collect();
        let nf = idx.len();
        let mut a = Matrix::zeros(nf + 1, nf + 1);
        let mut b = Vector::zeros(nf + 1);
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                a[(r, c)] = h[(i, j)];
            }
            a[(r, nf)] = 1.0;
            a[(nf, r)] = 1.0;
            b[r] = -g[i];
        }
        let Some(sol) = a.lu().solve(&b).filter(|s| s.iter().all(|v| v.is_finite())) else {
            return Ok(None);
        };
        let mut d = vec![0.0; k];
        for (r, &i) in idx.iter().enumerate() {
            d[i] = sol[r];
        }
        let dmax = d.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if dmax <= 1e-15 {
            let (res, nu) = kkt_residual(&g, &free);
            if res <= kkt_tol {
                return Ok(Some(mu));
            }
            // Release the bound variable with the most negative multiplier.
            let rel = (0..k)
                .filter(|&i| !free[i])
                .min_by(|&i, &j| (g[i] + nu).total_cmp(&(g[j] + nu)));
            match rel {
                Some(i) if g[i] + nu < 0.0 => {
                    free[i] = true;
                    continue;
                }
                _ => return Ok(Some(mu)),
            }
        }
        let mut alpha_max = 1.0;
        let mut blocking = None;
        for i in 0..k {
            if d[i] < 0.0 && -mu[i] / d[i] < alpha_max {
                alpha_max = -mu[i] / d[i];
                blocking = Some(i);
            }
        }
        let slope: f64 = (0..k).map(|i| g[i] * d[i]).sum();
        let mut alpha = alpha_max;
        let trial = |alpha: f64| -> Vec<f64> { (0..k).map(|i| (mu[i] + alpha * d[i]).max(0.0)).collect() };
        while e.value(&trial(alpha)) > f0 + 1e-4 * alpha * slope + 1e-15 * (1.0 + f0.abs()) {
            alpha *= 0.5;
            if alpha < 1e-12 {
                return Ok(None);
            }
        }
        mu = trial(alpha);
        if alpha == alpha_max {
            if let Some(i) = blocking {
                mu[i] = 0.0;
                free[i] = false;
            }
        }
        let s: f64 = mu.iter().sum();
        mu.iter_mut().for_each(|m| *m /= s);
        if dmax <= 1e-13 {
            let (_, g2, _) = e.derivatives(&mu)?;
            if kkt_residual(&g2, &free).0 <= kkt_tol {
                return Ok(Some(mu));
            }
        }
    }
    Ok(None)
}

/// Barycentric lattice points with denominator `r`.
fn simplex_lattice(k: usize, r: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
    let used: usize = prefix.iter().sum();
    if prefix.len() + 1 == k {
        let mut m: Vec<f64> = prefix.iter().map(|&c| c as f64 / r as f64).collect();
        m.push((r - used) as f64 / r as f64);
        out.push(m);
        return;
    }
    for c in 0..=(r - used) {
        prefix.push(c);
        simplex_lattice(k, r, prefix, out);
        prefix.pop();
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// The unique minimal-energy element of the face, with `u_ref = v_{k′}`.
pub fn minimal_energy_element(
    spec: &ProblemSpec,
    t: f64,
    x: &Vector,
    face: &FaceSelection,
    u_ref: f64,
    tol: &Tolerances,
) -> Result<EnergyMinimum> {
    let verts = face.active_vertices();
    let n = spec.n;
    if verts.iter().any(|g| g.len() != n + 1) {
        return Err(Error::InvalidInput(format!("face vertices must be (n+1)-vectors, n = {n}")));
    }
    let ind = geometric_independence(&verts, tol.tol_rank);
    if !ind.independent {
        return Err(Error::GeometricDependence { margin: ind.margin });
    }
    let e = Energy {
        spec,
        t,
        x,
        q: verts.iter().map(|g| g[0]).collect(),
        p: verts.iter().map(|g| g.rows(1, n).into_owned()).collect(),
        u_ref,
    };
    let k = verts.len();
    let mu = if k == 1 {
        vec![1.0]
    } else {
        match active_set_newton(&e, vec![1.0 / k as f64; k], tol.tol_kkt * 1e-3)? {
            Some(mu) => mu,
            None if k == 2 => {
                let (l, _) = golden_section(|l| e.value(&[l, 1.0 - l]), 0.0, 1.0, 1e-12);
                vec![l, 1.0 - l]
            }
            None => {
                let mut r = 64;
                while r > 2 && binomial(r + k - 1, k - 1) > 2.0e4 {
                    r /= 2;
                }
                let mut pts = Vec::new();
                simplex_lattice(k, r, &mut Vec::new(), &mut pts);
                let best = pts
                    .into_iter()
                    .min_by(|a, b| e.value(a).total_cmp(&e.value(b)))
                    .expect("lattice is nonempty");
                active_set_newton(&e, best.clone(), tol.tol_kkt * 1e-3)?.unwrap_or(best)
            }
        }
    };
    let (energy, g, h) = e.derivatives(&mu)?;
    let free: Vec<bool> = mu.iter().map(|&m| m > 0.0).collect();
    let kkt = if k == 1 { 0.0 } else { kkt_residual(&g, &free).0 };
    let hessian_min_eig = if k == 1 {
        f64::INFINITY
    } else {
        // D²_λλE = VᵀHV with V the tangent basis e_i − e_k.
        let v = Matrix::from_fn(k, k - 1, |r, c| {
            if r == c {
                1.0
            } else if r == k - 1 {
                -1.0
            } else {
                0.0
            }
        });
        (v.transpose() * h * v).symmetric_eigen().eigenvalues.min()
    };
    let (q, p) = e.point(&mu);
    let vel = spec.velocity(t, x, &p, u_ref)?;
    let margin = if k == 1 { 1.0 } else { mu.iter().copied().fold(f64::INFINITY, f64::min) };
    Ok(EnergyMinimum {
        lambda: Vector::from_iterator(k - 1, mu[..k - 1].iter().copied()),
        mu: Vector::from_vec(mu),
        q,
        p,
        v: vel,
        interior: margin >= tol.tol_ri,
        margin,
        kkt_residual: kkt,
        energy,
        hessian_min_eig,
    })
}

/// Hypothesis checks for tracing from a face.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NondegeneracyReport {
    pub geometrically_independent: bool,
    pub rank_margin: f64,
    pub interior: bool,
    pub interior_margin: f64,
    /// The face is the exposed face of the full set in direction `(1, v̄)`.
    pub exposed_in_velocity_direction: bool,
    pub forward_slack: Option<f64>,
    /// The face is the exposed face in direction `−(1, v̄)`.
    pub exposed_backward: bool,
    pub backward_slack: Option<f64>,
    /// Backward exposure and `(q̄, p̄)` not one of the vertices.
    pub minimax: bool,
}

impl NondegeneracyReport {
    pub fn forward_ok(&self) -> bool {
        self.geometrically_independent && self.interior && self.exposed_in_velocity_direction
    }

    pub fn backward_ok(&self) -> bool {
        self.geometrically_independent && self.interior && self.minimax
    }

    /// First failed forward hypothesis, for refusal messages.
    pub fn forward_failure(&self) -> Option<&'static str> {
        if !self.geometrically_independent {
            Some("active gradients are geometrically dependent")
        } else if !self.interior {
            Some("minimal-energy element is not in the relative interior of the face")
        } else if !self.exposed_in_velocity_direction {
            Some("face is not exposed in the direction (1, v̄)")
        } else {
            None
        }
    }
}

/// Whether `face` is exactly the set of minimizers of `⟨·, θ⟩` over `all`,
/// with the support gap to the other vertices.
pub(crate) fn exposure(all: &[Vector], face: &[usize], theta: &Vector, face_tol: f64) -> (bool, Option<f64>) {
    let s: Vec<f64> = all.iter().map(|g| g.dot(theta)).collect();
    let hi = face.iter().map(|&i| s[i]).fold(f64::NEG_INFINITY, f64::max);
    let lo = face.iter().map(|&i| s[i]).fold(f64::INFINITY, f64::min);
    let others = (0..all.len()).filter(|i| !face.contains(i)).map(|i| s[i]).reduce(f64::min);
    let slack = others.map(|o| o - hi);
    (hi - lo <= face_tol && slack.is_none_or(|sl| sl > face_tol), slack)
}

pub fn nondegeneracy_check(face: &FaceSelection, em: &EnergyMinimum, full: &[Vector], tol: &Tolerances) -> NondegeneracyReport {
    let verts = face.active_vertices();
    let ind = geometric_independence(&verts, tol.tol_rank);
    // indices of the face vertices within the full list
    let face_idx: Vec<usize> = verts
        .iter()
        .filter_map(|g| full.iter().position(|f| (f - g).amax() <= 1e-12 * (1.0 + g.amax())))
        .collect();
    let face_found = face_idx.len() == verts.len();
    let mut dir = Vector::zeros(em.v.len() + 1);
    dir[0] = 1.0;
    dir.rows_mut(1, em.v.len()).copy_from(&em.v);
    let (fwd, fslack) = if face_found { exposure(full, &face_idx, &dir, tol.face_tol) } else { (false, None) };
    let (bwd, bslack) = if face_found { exposure(full, &face_idx, &(-&dir), tol.face_tol) } else { (false, None) };
    let mut qp = Vector::zeros(em.p.len() + 1);
    qp[0] = em.q;
    qp.rows_mut(1, em.p.len()).copy_from(&em.p);
    let is_vertex = full.iter().any(|g| (g - &qp).norm() <= tol.tol_ri * (1.0 + g.norm()));
    NondegeneracyReport {
        geometrically_independent: ind.independent,
        rank_margin: ind.margin,
        interior: em.interior,
        interior_margin: em.margin,
        exposed_in_velocity_direction: fwd,
        forward_slack: fslack,
        exposed_backward: bwd,
        backward_slack: bslack,
        minimax: bwd && verts.len() >= 2 && !is_vertex,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::InitialDatum;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    fn grad(q: f64, p: f64) -> Vector {
        v(&[q, p])
    }

    #[test]
    fn rankine_hugoniot_midpoint() {
        let s = ProblemSpec::classical(1, InitialDatum::Constant { c: 0.0 }).unwrap();
        let tol = Tolerances::default();
        let (a1, a2) = (2.0, -0.5);
        let face = FaceSelection::whole(vec![grad(-a1 * a1 / 2.0, a1), grad(-a2 * a2 / 2.0, a2)]).unwrap();
        let em = minimal_energy_element(&s, 1.0, &v(&[0.0]), &face, 0.0, &tol).unwrap();
        assert!((em.lambda[0] - 0.5).abs() < 1e-12);
        assert!((em.p[0] - (a1 + a2) / 2.0).abs() < 1e-12);
        assert!((em.v[0] - (a1 + a2) / 2.0).abs() < 1e-12);
        assert!(em.interior && em.kkt_residual < 1e-12);
        let rep = nondegeneracy_check(&face, &em, &face.vertices, &tol);
        assert!(rep.forward_ok() && rep.backward_ok(), "{rep:?}");
    }

    #[test]
    fn singleton_face() {
        let s = ProblemSpec::classical(1, InitialDatum::Constant { c: 0.0 }).unwrap();
        let tol = Tolerances::default();
        let face = FaceSelection::whole(vec![grad(-0.5, 1.0)]).unwrap();
        let em = minimal_energy_element(&s, 1.0, &v(&[0.0]), &face, 0.0, &tol).unwrap();
        assert_eq!(em.lambda.len(), 0);
        assert_eq!(em.p[0], 1.0);
        assert_eq!(em.v[0], 1.0);
        assert!(!nondegeneracy_check(&face, &em, &face.vertices, &tol).minimax);
    }

    #[test]
    fn contact_midpoint() {
        let lam = 1.0;
        let s = ProblemSpec::contact(1, lam, InitialDatum::Constant { c: 0.0 }).unwrap();
        let tol = Tolerances::default();
        let t: f64 = 0.7;
        let (a1, a2) = (2.0, 0.0);
        let x = (a1 + a2) * (1.0 - (-lam * t).exp()) / (2.0 * lam);
        let w = (-lam * t).exp();
        let vi = |a: f64| w * a * x - a * a * w * (1.0 - w) / (2.0 * lam);
        let u = vi(a1);
        let g = |a: f64| grad(-(0.5 * (w * a) * (w * a) + lam * u), w * a);
        let face = FaceSelection::whole(vec![g(a1), g(a2)]).unwrap();
        let em = minimal_energy_element(&s, t, &v(&[x]), &face, u, &tol).unwrap();
        assert!((em.p[0] - w * (a1 + a2) / 2.0).abs() < 1e-12);
        assert!((em.v[0] - em.p[0]).abs() < 1e-15);
    }

    #[test]
    fn boundary_minimum_in_three_vertex_face() {
        // Vertex 2 has a very high q, so the minimum lies on the edge {0, 1}.
        let tol = Tolerances::default();
        let face = FaceSelection::whole(vec![
            v(&[-0.5, 1.0, 0.0]),
            v(&[-0.5, -1.0, 0.0]),
            v(&[5.0, 0.0, 1.0]),
        ])
        .unwrap();
        let s2 = ProblemSpec::classical(2, InitialDatum::Constant { c: 0.0 }).unwrap();
        let em = minimal_energy_element(&s2, 1.0, &v(&[0.0, 0.0]), &face, 0.0, &tol).unwrap();
        assert!(em.mu[2].abs() < 1e-12 && !em.interior);
        assert!((em.mu[0] - 0.5).abs() < 1e-9);
        assert!(em.kkt_residual < 1e-9);
    }

    #[test]
    fn dependent_face_rejected() {
        let s = ProblemSpec::classical(2, InitialDatum::Constant { c: 0.0 }).unwrap();
        let face = FaceSelection::whole(vec![v(&[0.0, 0.0, 0.0]), v(&[1.0, 1.0, 0.0]), v(&[2.0, 2.0, 0.0])]).unwrap();
        assert!(matches!(
            minimal_energy_element(&s, 1.0, &v(&[0.0, 0.0]), &face, 0.0, &Tolerances::default()),
            Err(Error::GeometricDependence { .. })
        ));
    }
}
