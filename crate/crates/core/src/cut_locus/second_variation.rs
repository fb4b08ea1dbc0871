use serde::Serialize;

use crate::flow::{flow_terminal_from, initial_var_state, integrate_variational_with_breaks, CharTrajectory, VarState};
use crate::linalg::{min_singular_value, near_kernel, spectral_norm};
use crate::problem::ProblemSpec;
use crate::{Error, Result, Tolerances, Vector};

/// A perturbation `α` sampled on a trajectory grid. Each node carries a left
/// and a right derivative so that corners are represented exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Perturbation {
    pub times: Vec<f64>,
    pub values: Vec<Vector>,
    pub left_deriv: Vec<Vector>,
    pub right_deriv: Vec<Vector>,
}

impl Perturbation {
    pub fn new(times: Vec<f64>, values: Vec<Vector>, left_deriv: Vec<Vector>, right_deriv: Vec<Vector>) -> Result<Self> {
        let m = times.len();
        if m < 2 || values.len() != m || left_deriv.len() != m || right_deriv.len() != m {
            return Err(Error::InvalidInput("perturbation needs ≥ 2 nodes with matching samples".into()));
        }
        Ok(Self {
            times,
            values,
            left_deriv,
            right_deriv,
        })
    }

    /// A C¹ perturbation from closed forms for `α` and `α̇`.
    pub fn from_fn<F, G>(times: &[f64], alpha: F, alpha_dot: G) -> Result<Self>
    where
        F: Fn(f64) -> Vector,
        G: Fn(f64) -> Vector,
    {
        let values = times.iter().map(|&s| alpha(s)).collect();
        let d: Vec<Vector> = times.iter().map(|&s| alpha_dot(s)).collect();
        Self::new(times.to_vec(), values, d.clone(), d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondVariationReport {
    pub t: f64,
    pub seed: Vector,
    /// `J*(α)`.
    pub value: f64,
    /// Weighted `αᵀ(0) D²u₀ α(0)`.
    pub initial_term: f64,
    pub integral: f64,
    /// Trapezoid error estimate from the grid with every other node.
    pub error_estimate: f64,
}

struct NodeData {
    l_u: f64,
    l_v: Vector,
    jet: crate::problem::LagrangianJet,
}

fn integrand(d: &NodeData, a: &Vector, ad: &Vector) -> f64 {
    let j = &d.jet;
    let lv_a = d.l_v.dot(a);
    a.dot(&(&j.l_xx * a))
        + 2.0 * a.dot(&j.l_xu) * lv_a
        + j.l_uu * lv_a * lv_a
        + 2.0 * (a.dot(&(&j.l_xv * ad)) + lv_a * j.l_vu.dot(ad))
        + ad.dot(&(&j.l_vv * ad))
}

/// Evaluates `J*(α)` along `minimizer` (which must start at its seed at
/// time 0 on the sheet described by `spec`).
pub fn accessory_second_variation(
    spec: &ProblemSpec,
    minimizer: &CharTrajectory,
    alpha: &Perturbation,
) -> Result<SecondVariationReport> {
    let m = minimizer.len();
    if alpha.times.len() != m
        || alpha
            .times
            .iter()
            .zip(&minimizer.times)
            .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs()))
    {
        return Err(Error::InvalidInput("perturbation is not sampled on the minimizer grid".into()));
    }
    if alpha.values.iter().any(|a| a.len() != spec.n) {
        return Err(Error::InvalidInput("perturbation has the wrong dimension".into()));
    }
    let scale = alpha.values.iter().map(|a| a.amax()).fold(0.0, f64::max);
    if alpha.values[m - 1].amax() > 1e-12 * (1.0 + scale) {
        return Err(Error::InvalidInput("perturbation must vanish at the terminal time".into()));
    }
    let nodes: Vec<NodeData> = (0..m)
        .map(|j| {
            let (s, x, p, u) = (minimizer.times[j], &minimizer.x[j], &minimizer.p[j], minimizer.u[j]);
            let v = spec.velocity(s, x, p, u)?;
            let jet = spec.lagrangian_jet(s, x, &v, u, 2)?;
            Ok(NodeData {
                l_u: jet.l_u,
                l_v: jet.l_v.clone(),
                jet,
            })
        })
        .collect::<Result<_>>()?;
    // w_j = exp(∫_{s_j}^t L_u), trapezoid from the right
    let mut log_w = vec![0.0; m];
    for j in (0..m - 1).rev() {
        let h = minimizer.times[j + 1] - minimizer.times[j];
        log_w[j] = log_w[j + 1] + 0.5 * h * (nodes[j].l_u + nodes[j + 1].l_u);
    }
    let w: Vec<f64> = log_w.iter().map(|l| l.exp()).collect();
    let right = |j: usize| w[j] * integrand(&nodes[j], &alpha.values[j], &alpha.right_deriv[j]);
    let left = |j: usize| w[j] * integrand(&nodes[j], &alpha.values[j], &alpha.left_deriv[j]);
    let panel = |a: usize, b: usize| 0.5 * (minimizer.times[b] - minimizer.times[a]) * (right(a) + left(b));
    let fine: f64 = (0..m - 1).map(|j| panel(j, j + 1)).sum();
    let mut coarse = 0.0;
    let mut j = 0;
    while j + 2 < m {
        coarse += panel(j, j + 2);
        j += 2;
    }
    if j + 1 < m {
        coarse += panel(j, j + 1);
    }
    let a0 = &alpha.values[0];
    let initial_term = w[0] * a0.dot(&(spec.d2u0(&minimizer.seed) * a0));
    Ok(SecondVariationReport {
        t: minimizer.t_end(),
        seed: minimizer.seed.clone(),
        value: initial_term + fine,
        initial_term,
        integral: fine,
        error_estimate: (fine - coarse).abs() / 3.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjugateWitness {
    pub s_bar: f64,
    pub theta: Vector,
    /// Smallest singular value of `X_z(s̄)`.
    pub sigma_min: f64,
    pub alpha: Perturbation,
    pub report: SecondVariationReport,
    /// `|α̇⁻(s̄)|`.
    pub corner: f64,
}

/// Builds the broken perturbation `α = X_z θ` on `[0, s̄]`, `0` on `[s̄, t]`,
/// and evaluates `J*(α)`.
pub fn conjugate_witness(
    spec: &ProblemSpec,
    z0: &Vector,
    s_bar: f64,
    t: f64,
    tol: &Tolerances,
) -> Result<ConjugateWitness> {
    if !(s_bar > 0.0 && s_bar < t) {
        return Err(Error::InvalidInput(format!(
            "the witness needs 0 < s̄ < t, got s̄ = {s_bar}, t = {t}"
        )));
    }
    let tr = integrate_variational_with_breaks(spec, z0, t, tol.policy(), &[s_bar])?;
    let times = tr.char.times.clone();
    let jb = times
        .iter()
        .position(|&s| (s - s_bar).abs() <= 1e-12 * (1.0 + s_bar))
        .ok_or_else(|| Error::InvalidInput("s̄ is not on the integration grid".into()))?;
    let xz_bar = &tr.xz[jb];
    let sigma_max = spectral_norm(xz_bar);
    let (sigma_min, theta) = near_kernel(xz_bar);
    if sigma_min > tol.tol_conj.sqrt() * sigma_max.max(1.0) {
        return Err(Error::Precondition(format!(
            "X_z(s̄) has no near-kernel direction (smallest singular value {sigma_min:e})"
        )));
    }
    let n = spec.n;
    let mut values = Vec::with_capacity(times.len());
    let mut derivs = Vec::with_capacity(times.len());
    for j in 0..times.len() {
        if j > jb {
            values.push(Vector::zeros(n));
            derivs.push(Vector::zeros(n));
            continue;
        }
        let (x, p, u) = (&tr.char.x[j], &tr.char.p[j], tr.char.u[j]);
        let h = spec.hamiltonian_jet(times[j], x, p, u, 2)?;
        let xt = &tr.xz[j] * &theta;
        let pt = &tr.pz[j] * &theta;
        let ut = tr.uz[j].dot(&theta);
        values.push(xt.clone());
        derivs.push(&h.h_px * xt + &h.h_pp * pt + &h.h_pu * ut);
    }
    let left = derivs.clone();
    let mut right = derivs;
    right[jb] = Vector::zeros(n);
    values[jb] = Vector::zeros(n);
    let corner = left[jb].norm();
    let alpha = Perturbation::new(times, values, left, right)?;
    let report = accessory_second_variation(spec, &tr.char, &alpha)?;
    Ok(ConjugateWitness {
        s_bar,
        theta,
        sigma_min,
        alpha,
        report,
        corner,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianSeries {
    pub times: Vec<f64>,
    /// `‖P_z X_z⁻¹‖₂` at each retained time.
    pub norms: Vec<f64>,
    /// First requested time dropped because `X_z` was numerically singular.
    pub truncated_at: Option<f64>,
    pub monotone: bool,
}

/// `‖∇²u(t, X(t; z₀))‖` through `P_z X_z⁻¹` at increasing `times`.
pub fn hessian_blowup_probe(
    spec: &ProblemSpec,
    z0: &Vector,
    times: &[f64],
    tol: &Tolerances,
) -> Result<HessianSeries> {
    if z0.len() != spec.n {
        return Err(Error::InvalidInput("seed has the wrong dimension".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.first().is_some_and(|&t| !(t > 0.0)) {
        return Err(Error::InvalidInput("probe times must be positive and increasing".into()));
    }
    let mut out = HessianSeries {
        times: Vec::new(),
        norms: Vec::new(),
        truncated_at: None,
        monotone: true,
    };
    let mut s = 0.0;
    let mut st: VarState = initial_var_state(spec, z0);
    for &t in times {
        st = flow_terminal_from(spec, s, &st, t, tol.policy())?;
        s = t;
        let sigma = min_singular_value(&st.xz);
        let inv = st.xz.clone().try_inverse();
        let Some(inv) = inv.filter(|_| sigma > tol.tol_conj) else {
            out.truncated_at = Some(t);
            break;
        };
        out.times.push(t);
        out.norms.push(spectral_norm(&(&st.pz * inv)));
    }
    out.monotone = out.norms.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::integrate_lie;
    use crate::problem::InitialDatum;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    #[test]
    fn focusing_linear_ramp() {
        let s = ProblemSpec::focusing(1, 1.0).unwrap();
        let tol = Tolerances::default();
        let tr = integrate_lie(&s, &v(&[0.3]), 0.5, tol.policy()).unwrap();
        let a = Perturbation::from_fn(&tr.times, |r| v(&[1.0 - r / 0.5]), |_| v(&[-2.0])).unwrap();
        let r = accessory_second_variation(&s, &tr, &a).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn focusing_zero_at_focal_time() {
        let s = ProblemSpec::focusing(1, 1.0).unwrap();
        let tol = Tolerances::default();
        let tr = integrate_lie(&s, &v(&[0.3]), 1.0, tol.policy()).unwrap();
        let a = Perturbation::from_fn(&tr.times, |r| v(&[1.0 - r]), |_| v(&[-1.0])).unwrap();
        let r = accessory_second_variation(&s, &tr, &a).unwrap();
        assert!(r.value.abs() < 1e-6);
    }

    #[test]
    fn linear_datum_kinetic_only() {
        let s = ProblemSpec::classical(2, InitialDatum::Linear { a: vec![0.5, 1.0] }).unwrap();
        let tol = Tolerances::default();
        let tr = integrate_lie(&s, &v(&[0.0, 0.0]), 1.0, tol.policy()).unwrap();
        let pi = std::f64::consts::PI;
        let a = Perturbation::from_fn(
            &tr.times,
            |r| v(&[(pi * r).sin(), 1.0 - r]),
            |r| v(&[pi * (pi * r).cos(), -1.0]),
        )
        .unwrap();
        let r = accessory_second_variation(&s, &tr, &a).unwrap();
        // ∫ π²cos² + 1 = π²/2 + 1
        assert!((r.value - (pi * pi / 2.0 + 1.0)).abs() < 1e-3);
        assert!(r.error_estimate < 1e-3);
    }

    #[test]
    fn grid_mismatch_and_nonzero_end() {
        let s = ProblemSpec::focusing(1, 1.0).unwrap();
        let tol = Tolerances::default();
        let tr = integrate_lie(&s, &v(&[0.3]), 0.5, tol.policy()).unwrap();
        let short = Perturbation::from_fn(&tr.times[1..], |_| v(&[0.0]), |_| v(&[0.0])).unwrap();
        assert!(accessory_second_variation(&s, &tr, &short).is_err());
        let ones = Perturbation::from_fn(&tr.times, |_| v(&[1.0]), |_| v(&[0.0])).unwrap();
        assert!(accessory_second_variation(&s, &tr, &ones).is_err());
    }

    #[test]
    fn witness_focusing() {
        let s = ProblemSpec::focusing(1, 1.0).unwrap();
        let w = conjugate_witness(&s, &v(&[0.5]), 1.0, 1.2, &Tolerances::default()).unwrap();
        assert!(w.report.value.abs() <= 1e-6, "{:?}", w.report);
        assert!(w.corner >= 0.4);
        let s2 = ProblemSpec::focusing(1, 2.0).unwrap();
        let w = conjugate_witness(&s2, &v(&[0.5]), 0.5, 0.7, &Tolerances::default()).unwrap();
        assert!(w.report.value.abs() <= 1e-6);
    }

    #[test]
    fn witness_refused_without_kernel() {
        let s = ProblemSpec::classical(1, InitialDatum::Linear { a: vec![1.0] }).unwrap();
        let tol = Tolerances::default();
        assert!(matches!(
            conjugate_witness(&s, &v(&[0.0]), 0.5, 1.0, &tol),
            Err(Error::Precondition(_))
        ));
        let f = ProblemSpec::focusing(1, 1.0).unwrap();
        assert!(conjugate_witness(&f, &v(&[0.0]), 1.0, 1.0, &tol).is_err());
    }

    #[test]
    fn blowup_series() {
        let s = ProblemSpec::focusing(1, 1.0).unwrap();
        let tol = Tolerances::default();
        let times: Vec<f64> = (1..=10).map(|j| 1.0 - 0.5f64.powi(j)).collect();
        let h = hessian_blowup_probe(&s, &v(&[0.4]), &times, &tol).unwrap();
        assert_eq!(h.norms.len(), 10);
        for (j, n) in h.norms.iter().enumerate() {
            let exact = 2f64.powi(j as i32 + 1);
            assert!((n - exact).abs() <= 1e-6 * exact, "{n} vs {exact}");
        }
        assert!(h.monotone);
        let s2 = ProblemSpec::focusing(1, 2.0).unwrap();
        let h = hessian_blowup_probe(&s2, &v(&[0.0]), &[0.25, 0.375, 0.4375], &tol).unwrap();
        for (t, n) in h.times.iter().zip(&h.norms) {
            assert!((n - 2.0 / (1.0 - 2.0 * t)).abs() < 1e-6 * n);
        }
        let lin = ProblemSpec::classical(1, InitialDatum::Linear { a: vec![1.0] }).unwrap();
        let h = hessian_blowup_probe(&lin, &v(&[0.0]), &[0.5, 1.0, 2.0], &tol).unwrap();
        assert!(h.norms.iter().all(|&n| n == 0.0));
    }
}
