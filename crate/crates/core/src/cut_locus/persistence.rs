use serde::Serialize;

use super::classify::classify_point;
use crate::bolza::{default_box, default_grid_per_dim, newton_root, shoot_minimizers, MinimizerSet};
use crate::problem::ProblemSpec;
use crate::{AxisBox, Error, Result, Tolerances, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PersistenceDetector {
    /// Shooting found `k ≥ 2` minimizers at a grid point.
    MultipleMinimizers,
    /// Neighbouring grid points are served by different branches; the
    /// crossing was located by bisection on the branch-value difference.
    BranchSwitch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersistenceHit {
    pub t: f64,
    pub x: Vector,
    pub detector: PersistenceDetector,
    /// Refinement depth at which the hit was found.
    pub depth: usize,
    pub points_checked: usize,
    /// Values of the competing minimizers at the hit.
    pub values: Vec<f64>,
}

struct Sample {
    x: Vector,
    set: Option<MinimizerSet>,
}

impl Sample {
    fn leader(&self) -> Option<(usize, &Vector, f64)> {
        let e = self.set.as_ref()?.minimizers().next()?;
        Some((e.sheet, &e.seed, e.value))
    }
}

fn shoot(spec: &ProblemSpec, t: f64, x: &Vector, tol: &Tolerances) -> Option<MinimizerSet> {
    shoot_minimizers(spec, t, x, &default_box(spec, t, x), default_grid_per_dim(spec.n), tol)
        .ok()
        .filter(|s| s.u.is_some())
}

/// Follows the branch `(sheet, seed)` from its home point to `x`.
fn continue_branch(
    sheets: &[ProblemSpec],
    sheet: usize,
    seed: &Vector,
    t: f64,
    x: &Vector,
    tol: &Tolerances,
) -> Option<(Vector, f64)> {
    newton_root(&sheets[sheet], t, x, seed, tol, None)
        .ok()
        .filter(|r| r.state.xz.determinant().abs() > tol.tol_conj)
        .map(|r| (r.z, r.state.char.u))
}

/// Bisection on `v_A − v_B` along the segment between two samples served
/// by different branches.
fn locate_switch(
    spec: &ProblemSpec,
    sheets: &[ProblemSpec],
    t: f64,
    a: &Sample,
    b: &Sample,
    tol: &Tolerances,
) -> Option<(Vector, Vec<f64>)> {
    let (sa, za, _) = a.leader()?;
    let (sb, zb, _) = b.leader()?;
    let (mut ga, mut gb) = (za.clone(), zb.clone());
    let diff = |x: &Vector, ga: &mut Vector, gb: &mut Vector| -> Option<(f64, f64)> {
        let (ra, va) = continue_branch(sheets, sa, ga, t, x, tol)?;
        let (rb, vb) = continue_branch(sheets, sb, gb, t, x, tol)?;
        *ga = ra;
        *gb = rb;
        Some((va, vb))
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let at = |s: f64| &a.x + (&b.x - &a.x) * s;
    // At the A end branch A is lower, at the B end branch B is.
    let (va0, vb0) = diff(&a.x, &mut ga.clone(), &mut gb.clone())?;
    let (va1, vb1) = diff(&b.x, &mut ga.clone(), &mut gb.clone())?;
    if !(va0 - vb0 <= 0.0 && va1 - vb1 >= 0.0) {
        return None;
    }
    let span = (&b.x - &a.x).norm();
    while (hi - lo) * span > 1e-12 * (1.0 + a.x.norm()) {
        let mid = 0.5 * (lo + hi);
        let (va, vb) = diff(&at(mid), &mut ga, &mut gb)?;
        if va - vb <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = at(0.5 * (lo + hi));
    let (va, vb) = diff(&x, &mut ga, &mut gb)?;
    // Both branches must be minimizing at the crossing.
    let set = shoot(spec, t, &x, tol)?;
    let u = set.u?;
    let tie = tol.tie_tol(u);
    (va <= u + tie && vb <= u + tie && (va - vb).abs() <= tie).then(|| (x, vec![va, vb]))
}

fn ball_grid(center: &Vector, r: f64, per_dim: usize) -> Result<Vec<Vector>> {
    let b = AxisBox::centered(center, r);
    Ok(b.grid(per_dim)
        .into_iter()
        .filter(|p| (p - center).norm() <= r * (1.0 + 1e-12))
        .collect())
}

/// Searches `B_{εM}(x₀)` at time `t₀ + ε` for a singular point, refining the
/// grid up to `max_depth` times.
#[allow(clippy::too_many_arguments)]
pub fn persistence_probe(
    spec: &ProblemSpec,
    t0: f64,
    x0: &Vector,
    eps: f64,
    speed_bound: f64,
    grid_per_dim: usize,
    max_depth: usize,
    tol: &Tolerances,
) -> Result<PersistenceHit> {
    if !(eps > 0.0 && speed_bound > 0.0) || eps > 1.0_f64.min(1.0 / speed_bound) {
        return Err(Error::Precondition(format!(
            "need 0 < ε ≤ min(1, 1/M), got ε = {eps}, M = {speed_bound}"
        )));
    }
    if grid_per_dim < 2 {
        return Err(Error::InvalidInput("persistence grid needs at least 2 points per axis".into()));
    }
    let c = classify_point(spec, t0, x0, tol, None)?;
    if !c.kind.is_singular() {
        return Err(Error::Precondition(format!(
            "persistence needs a singular start point, got {}",
            c.kind.as_str()
        )));
    }
    let t = t0 + eps;
    let r = eps * speed_bound;
    let sheets = spec.sheets();
    let n = spec.n;
    let mut points = 0;
    for depth in 0..=max_depth {
        let per_dim = (grid_per_dim - 1) * (1 << depth) + 1;
        let grid = ball_grid(x0, r, per_dim)?;
        let mut samples: Vec<Sample> = Vec::with_capacity(grid.len());
        for x in grid {
            points += 1;
            let set = shoot(spec, t, &x, tol);
            if let Some(s) = set.as_ref().filter(|s| s.k() >= 2) {
                return Ok(PersistenceHit {
                    t,
                    values: s.minimizers().map(|e| e.value).collect(),
                    x,
                    detector: PersistenceDetector::MultipleMinimizers,
                    depth,
                    points_checked: points,
                });
            }
            samples.push(Sample { x, set });
        }
        // Axis neighbours on the full box grid differ by one step along one axis.
        let step = 2.0 * r / (per_dim - 1) as f64;
        for i in 0..samples.len() {
            for j in i + 1..samples.len() {
                let d = &samples[j].x - &samples[i].x;
                let along = (0..n).filter(|&k| d[k].abs() > 0.5 * step).count();
                if along != 1 || d.amax() > 1.5 * step {
                    continue;
                }
                let (Some(la), Some(lb)) = (samples[i].leader(), samples[j].leader()) else {
                    continue;
                };
                let same = match continue_branch(&sheets, la.0, la.1, t, &samples[j].x, tol) {
                    Some((z, _)) => la.0 == lb.0 && (&z - lb.1).norm() <= tol.dedupe_rel * (1.0 + z.norm()),
                    None => false,
                };
                if same {
                    continue;
                }
                if let Some((x, values)) = locate_switch(spec, &sheets, t, &samples[i], &samples[j], tol) {
                    return Ok(PersistenceHit {
                        t,
                        x,
                        detector: PersistenceDetector::BranchSwitch,
                        depth,
                        points_checked: points,
                        values,
                    });
                }
            }
        }
    }
    Err(Error::Exhausted {
        depth: max_depth,
        points,
        detail: format!("no singular point in the ball of radius {r} at t = {t}"),
    })
}
