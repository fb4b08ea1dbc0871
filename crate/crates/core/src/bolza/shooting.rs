use rayon::prelude::*;
use serde::Serialize;

use crate::flow::{flow_terminal, VarState};
use crate::problem::ProblemSpec;
use crate::{AxisBox, Error, Result, Tolerances, Vector};

/// One converged root `z` of `X(t; z) = x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizerEntry {
    pub seed: Vector,
    /// Index of the smooth piece of the initial datum that seeded it.
    pub sheet: usize,
    /// `U(t; z)`.
    pub value: f64,
    /// `|X(t; z) − x|`.
    pub residual: f64,
    pub det_xz: f64,
    /// `P(t; z)`.
    pub momentum: Vector,
    pub minimizing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizerSet {
    pub t: f64,
    pub x: Vector,
    /// Sorted by value, ascending.
    pub entries: Vec<MinimizerEntry>,
    /// Attained minimum; `None` when no root was found.
    pub u: Option<f64>,
    pub search_box: AxisBox,
    pub seeds_tried: usize,
    pub seeds_diverged: usize,
    pub diagnostic: Option<String>,
}

impl MinimizerSet {
    pub fn minimizers(&self) -> impl Iterator<Item = &MinimizerEntry> {
        self.entries.iter().filter(|e| e.minimizing)
    }

    /// Number of minimizing entries.
    pub fn k(&self) -> usize {
        self.minimizers().count()
    }

    pub fn min_abs_det(&self) -> Option<f64> {
        self.minimizers().map(|e| e.det_xz.abs()).reduce(f64::min)
    }

    pub fn value(&self) -> Result<f64> {
        self.u.ok_or_else(|| {
            Error::NoMinimizer(
                self.diagnostic
                    .clone()
                    .unwrap_or_else(|| "empty minimizer set".into()),
            )
        })
    }
}

/// A converged Newton root with its terminal variational state.
#[derive(Debug, Clone)]
pub struct NewtonRoot {
    pub z: Vector,
    pub state: VarState,
    pub residual: f64,
    pub iterations: usize,
}

fn polish(spec: &ProblemSpec, t: f64, x: &Vector, z: &mut Vector, st: &mut VarState, rn: &mut f64, policy: crate::flow::StepPolicy) {
    for _ in 0..POLISH_MAX_ITER {
        let r = &st.char.x - x;
        let Some(delta) = st.xz.clone().lu().solve(&(-r)).filter(|d| d.iter().all(|v| v.is_finite())) else {
            return;
        };
        let zn = &*z + delta;
        let Ok(sn) = flow_terminal(spec, &zn, t, policy) else {
            return;
        };
        let rnew = (&sn.char.x - x).norm();
        if !(rnew < *rn) {
            return;
        }
        *z = zn;
        *st = sn;
        *rn = rnew;
    }
}

const POLISH_MAX_ITER: usize = 200;

/// Damped Newton on `z ↦ X(t; z) − x` with backtracking halving.
pub fn newton_root(
    spec: &ProblemSpec,
    t: f64,
    x: &Vector,
    z0: &Vector,
    tol: &Tolerances,
    limit: Option<&AxisBox>,
) -> Result<NewtonRoot> {
    let policy = tol.policy();
    let target = tol.shoot_tol(x.norm());
    let mut z = z0.clone();
    let mut st = flow_terminal(spec, &z, t, policy)?;
    let mut rn = (&st.char.x - x).norm();
    for it in 0..=tol.newton_max_iter {
        if rn <= target {
            if st.xz.determinant().abs() <= tol.tol_conj.sqrt() {
                // Degenerate roots converge slowly and are located only to
                // about target^(1/multiplicity); polish to the residual floor
                // so that seeds of one root deduplicate.
                polish(spec, t, x, &mut z, &mut st, &mut rn, policy);
            }
            return Ok(NewtonRoot {
                z,
                state: st,
                residual: rn,
                iterations: it,
            });
        }
        if it == tol.newton_max_iter {
            break;
        }
        let r = &st.char.x - x;
        let delta = st
            .xz
            .clone()
            .lu()
            .solve(&(-r))
            .filter(|d| d.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Newton(format!("X_z singular at z = {:?}", z.as_slice())))?;
        let mut alpha = 1.0;
        loop {
            let zn = &z + &delta * alpha;
            if let Ok(sn) = flow_terminal(spec, &zn, t, policy) {
                let rnew = (&sn.char.x - x).norm();
                if rnew < (1.0 - 1e-4 * alpha) * rn || rnew <= target {
                    z = zn;
                    st = sn;
                    rn = rnew;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-10 {
                return Err(Error::Newton(format!(
                    "line search stalled at residual {rn:e}"
                )));
            }
        }
        if let Some(b) = limit {
            if !b.contains(&z) {
                return Err(Error::Newton("iterate left the search region".into()));
            }
        }
    }
    Err(Error::Newton(format!(
        "no convergence in {} iterations (residual {rn:e})",
        tol.newton_max_iter
    )))
}

/// Default search box: centred at `x` with half-width
/// `max(2, 2t(1 + |Du₀(x)|))`, maximised over the smooth pieces of `u₀`.
pub fn default_box(spec: &ProblemSpec, t: f64, x: &Vector) -> AxisBox {
    let slope = spec
        .initial_datum
        .pieces()
        .iter()
        .map(|d| d.gradient(x).norm())
        .fold(0.0, f64::max);
    AxisBox::centered(x, (2.0f64).max(2.0 * t * (1.0 + slope)))
}

/// Default number of grid seeds per axis.
pub fn default_grid_per_dim(n: usize) -> usize {
    match n {
        1 => 41,
        2 => 13,
        _ => 7,
    }
}

/// Multi-start shooting for all characteristics reaching `(t, x)`.
pub fn shoot_minimizers(
    spec: &ProblemSpec,
    t: f64,
    x: &Vector,
    search_box: &AxisBox,
    grid_per_dim: usize,
    tol: &Tolerances,
) -> Result<MinimizerSet> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("shooting needs t > 0, got {t}")));
    }
    if x.len() != spec.n || search_box.dim() != spec.n {
        return Err(Error::InvalidInput("query point and box must have dimension n".into()));
    }
    let sheets = spec.sheets();
    let seeds = search_box.grid(grid_per_dim);
    let width = search_box.width();
    let limit = AxisBox::new(
        search_box.min.iter().map(|a| a - width).collect(),
        search_box.max.iter().map(|b| b + width).collect(),
    )?;
    let jobs: Vec<(usize, &Vector)> = (0..sheets.len())
        .flat_map(|s| seeds.iter().map(move |z| (s, z)))
        .collect();
    let roots: Vec<Option<(usize, NewtonRoot)>> = jobs
        .par_iter()
        .map(|&(s, z)| newton_root(&sheets[s], t, x, z, tol, Some(&limit)).ok().map(|r| (s, r)))
        .collect();

    let radius = tol.dedupe_rel * width;
    let diverged = roots.iter().filter(|r| r.is_none()).count();
    let mut kept: Vec<(usize, NewtonRoot)> = Vec::new();
    for (s, root) in roots.into_iter().flatten() {
        if kept
            .iter()
            .all(|(s2, r2)| *s2 != s || (&r2.z - &root.z).norm() > radius)
        {
            kept.push((s, root));
        }
    }
    let mut entries: Vec<MinimizerEntry> = kept
        .into_iter()
        .map(|(s, r)| MinimizerEntry {
            det_xz: r.state.xz.determinant(),
            value: r.state.char.u,
            momentum: r.state.char.p.clone(),
            residual: r.residual,
            seed: r.z,
            sheet: s,
            minimizing: false,
        })
        .collect();
    entries.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.sheet.cmp(&b.sheet))
            .then_with(|| {
                a.seed
                    .iter()
                    .zip(b.seed.iter())
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    let u = entries.first().map(|e| e.value);
    if let Some(umin) = u {
        let tie = tol.tie_tol(umin);
        for e in &mut entries {
            e.minimizing = e.value <= umin + tie;
        }
    }
    let diagnostic = entries.is_empty().then(|| {
        format!(
            "no root of X(t; z) = x among {} seeds in box of width {width} ({diverged} diverged); box likely too small",
            jobs.len()
        )
    });
    Ok(MinimizerSet {
        t,
        x: x.clone(),
        entries,
        u,
        search_box: search_box.clone(),
        seeds_tried: jobs.len(),
        seeds_diverged: diverged,
        diagnostic,
    })
}

/// `u(t, x)` with the minimizer set; `t = 0` returns `u₀(x)`.
pub fn value(
    spec: &ProblemSpec,
    t: f64,
    x: &Vector,
    search_box: Option<&AxisBox>,
    grid_per_dim: Option<usize>,
    tol: &Tolerances,
) -> Result<(f64, MinimizerSet)> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidInput(format!("time must be nonnegative, got {t}")));
    }
    let b = search_box
        .cloned()
        .unwrap_or_else(|| default_box(spec, t, x));
    if t == 0.0 {
        let u = spec.u0(x);
        let set = MinimizerSet {
            t,
            x: x.clone(),
            entries: vec![MinimizerEntry {
                seed: x.clone(),
                sheet: 0,
                value: u,
                residual: 0.0,
                det_xz: 1.0,
                momentum: spec.du0(x),
                minimizing: true,
            }],
            u: Some(u),
            search_box: b,
            seeds_tried: 0,
            seeds_diverged: 0,
            diagnostic: None,
        };
        return Ok((u, set));
    }
    let set = shoot_minimizers(
        spec,
        t,
        x,
        &b,
        grid_per_dim.unwrap_or_else(|| default_grid_per_dim(spec.n)),
        tol,
    )?;
    Ok((set.value()?, set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bolza::fundamental_solution_free;
    use crate::problem::InitialDatum;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    #[test]
    fn classical_linear_unique_root() {
        let s = ProblemSpec::classical(1, InitialDatum::Linear { a: vec![1.0] }).unwrap();
        let tol = Tolerances::default();
        let (u, set) = value(&s, 2.0, &v(&[0.0]), None, None, &tol).unwrap();
        assert_eq!(set.k(), 1);
        assert_eq!(set.entries.len(), 1);
        assert!((set.entries[0].seed[0] + 2.0).abs() < 1e-9);
        assert!((u + 1.0).abs() < 1e-9);
    }

    #[test]
    fn focusing_before_focal_time() {
        let s = ProblemSpec::focusing(1, 1.0).unwrap();
        let tol = Tolerances::default();
        let (u, set) = value(&s, 0.5, &v(&[0.0]), None, None, &tol).unwrap();
        assert_eq!(set.k(), 1);
        assert!(set.entries[0].seed[0].abs() < 1e-9);
        assert!(u.abs() < 1e-12);
        assert!((set.entries[0].det_xz - 0.5).abs() < 1e-9);
        let (u, _) = value(&s, 0.5, &v(&[1.0]), None, None, &tol).unwrap();
        assert!((u + 1.0).abs() < 1e-6);
    }

    #[test]
    fn contact_linear_value() {
        let s = ProblemSpec::contact(1, 1.0, InitialDatum::Linear { a: vec![1.0] }).unwrap();
        let tol = Tolerances::default();
        let (u, set) = value(&s, 1.0, &v(&[1.0]), None, None, &tol).unwrap();
        let e = (-1f64).exp();
        assert!((set.entries[0].seed[0] - e).abs() < 1e-6);
        assert!((u - (e - e * (1.0 - e) / 2.0)).abs() < 1e-5);
    }

    #[test]
    fn constant_datum_values() {
        let tol = Tolerances::default();
        let s = ProblemSpec::classical(1, InitialDatum::Constant { c: 1.5 }).unwrap();
        assert!((value(&s, 0.7, &v(&[0.2]), None, None, &tol).unwrap().0 - 1.5).abs() < 1e-12);
        let s = ProblemSpec::contact(1, 0.5, InitialDatum::Constant { c: 1.5 }).unwrap();
        let u = value(&s, 0.7, &v(&[0.2]), None, None, &tol).unwrap().0;
        assert!((u - 1.5 * (-0.35f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn double_well_symmetric_pair() {
        let s = ProblemSpec::classical(1, InitialDatum::DoubleWell).unwrap();
        let tol = Tolerances::default();
        let (_, set) = value(&s, 2.0, &v(&[0.0]), None, None, &tol).unwrap();
        assert_eq!(set.entries.len(), 3);
        assert_eq!(set.k(), 2);
        let zs: Vec<f64> = set.minimizers().map(|e| e.seed[0]).collect();
        assert!((zs[0] + zs[1]).abs() < 1e-8);
        assert!((zs[0].abs() - 1.915).abs() < 1e-2);
    }

    #[test]
    fn empty_box_reports_diagnostic() {
        let s = ProblemSpec::classical(1, InitialDatum::Linear { a: vec![1.0] }).unwrap();
        let tol = Tolerances::default();
        // root z = -2 lies far outside the tiny box; Newton leaves the limit region
        let b = AxisBox::new(vec![5.0], vec![5.1]).unwrap();
        let set = shoot_minimizers(&s, 2.0, &v(&[0.0]), &b, 3, &tol).unwrap();
        assert!(set.entries.is_empty());
        assert!(set.diagnostic.is_some());
        assert!(matches!(set.value(), Err(Error::NoMinimizer(_))));
    }

    #[test]
    fn free_endpoint_oracle_agrees_with_shooting() {
        let tol = Tolerances::default();
        for s in [
            ProblemSpec::contact(1, 1.0, InitialDatum::Linear { a: vec![1.0] }).unwrap(),
            ProblemSpec::contact(1, 0.5, InitialDatum::DoubleWell).unwrap(),
        ] {
            let x = v(&[0.4]);
            let (u, set) = value(&s, 0.8, &x, None, None, &tol).unwrap();
            let oracle = fundamental_solution_free(&s, 0.8, &x, &[set.entries[0].seed.clone()]).unwrap();
            assert!((oracle.extrapolated - u).abs() < 1e-4, "{} vs {u}", oracle.extrapolated);
        }
    }
}
