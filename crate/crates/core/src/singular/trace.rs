use std::io::Write;

use serde::Serialize;

use super::energy::{exposure, minimal_energy_element, nondegeneracy_check, EnergyMinimum, NondegeneracyReport};
use super::face::{exposed_face, geometric_independence, FaceSelection};
use super::sheets::SheetSet;
use crate::bolza::{default_box, default_grid_per_dim, shoot_minimizers};
use crate::cut_locus::{classify_point, Branch, PointKind};
use crate::problem::ProblemSpec;
use crate::{Error, Result, Tolerances, Vector};

/// Steps between global re-shooting checks for branches entering from outside.
const REVALIDATE_EVERY: usize = 25;
/// Largest branch count for the automatic backward face search.
const MAX_AUTO_BRANCHES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceDirection {
    Forward,
    Backward,
    Bidirectional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Horizon,
    FaceBoundary,
    RankLoss,
    BranchCrossing,
    Conjugacy,
    IntegrationFailure,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Horizon => "horizon",
            StopReason::FaceBoundary => "face_boundary",
            StopReason::RankLoss => "rank_loss",
            StopReason::BranchCrossing => "branch_crossing",
            StopReason::Conjugacy => "conjugacy",
            StopReason::IntegrationFailure => "integration_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularSample {
    pub t: f64,
    pub x: Vector,
    pub lambda: Vector,
    pub q: f64,
    pub p: Vector,
    pub v: Vector,
    /// Values of the active branches.
    pub values: Vec<f64>,
    /// `max_i |v_i − v_{k′}|` over the active branches.
    pub equality_residual: f64,
    /// Smallest `⟨Dv_j − Dv_{k′}, ±(1, v̄)⟩` over tracked inactive branches.
    pub inactive_margin: Option<f64>,
    pub rank_margin: f64,
    pub interior_margin: f64,
    /// `det X_z` of the active branches.
    pub dets: Vec<f64>,
}

impl SingularSample {
    pub fn min_abs_det(&self) -> f64 {
        self.dets.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min)
    }
}

/// A strict singular characteristic, samples in increasing time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularCurve {
    pub direction: TraceDirection,
    /// Indices of the active sheets.
    pub active: Vec<usize>,
    pub samples: Vec<SingularSample>,
    /// Why the forward (or only) leg stopped.
    pub stop: StopReason,
    pub stop_detail: Option<String>,
    /// Why the backward leg stopped, for bidirectional traces.
    pub backward_stop: Option<StopReason>,
    pub backward_detail: Option<String>,
    pub hypotheses: NondegeneracyReport,
    /// `|v̄(t₀, x₀) − H_p(t₀, x₀, p₀, u)|` for a supplied backward datum.
    pub start_velocity_residual: Option<f64>,
}

impl SingularCurve {
    pub fn max_equality_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.equality_residual).fold(0.0, f64::max)
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.samples[0].t, self.samples[self.samples.len() - 1].t)
    }

    /// Linear interpolation of the position.
    pub fn position(&self, t: f64) -> Option<Vector> {
        let s = &self.samples;
        let j = s.partition_point(|a| a.t <= t);
        if j == 0 || (j == s.len() && t > s[s.len() - 1].t) {
            return (s[0].t == t).then(|| s[0].x.clone());
        }
        if j == s.len() {
            return Some(s[j - 1].x.clone());
        }
        let (a, b) = (&s[j - 1], &s[j]);
        let w = (t - a.t) / (b.t - a.t);
        Some(&a.x * (1.0 - w) + &b.x * w)
    }

    /// Columns `t, x*, lambda*, q, p*, v*, equality_residual,
    /// inactive_margin, rank_margin, interior_margin, min_abs_det`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let Some(first) = self.samples.first() else {
            wr.flush()?;
            return Ok(());
        };
        let n = first.x.len();
        let l = first.lambda.len();
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..l).map(|i| format!("lambda{i}")));
        header.push("q".into());
        header.extend((0..n).map(|i| format!("p{i}")));
        header.extend((0..n).map(|i| format!("v{i}")));
        for h in ["equality_residual", "inactive_margin", "rank_margin", "interior_margin", "min_abs_det"] {
            header.push(h.into());
        }
        wr.write_record(&header)?;
        for s in &self.samples {
            let mut r = vec![s.t.to_string()];
            r.extend(s.x.iter().map(|v| v.to_string()));
            r.extend(s.lambda.iter().map(|v| v.to_string()));
            r.push(s.q.to_string());
            r.extend(s.p.iter().map(|v| v.to_string()));
            r.extend(s.v.iter().map(|v| v.to_string()));
            r.push(s.equality_residual.to_string());
            r.push(s.inactive_margin.map(|m| m.to_string()).unwrap_or_default());
            r.push(s.rank_margin.to_string());
            r.push(s.interior_margin.to_string());
            r.push(s.min_abs_det().to_string());
            wr.write_record(&r)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn gradient(b: &Branch) -> Vector {
    let mut g = Vector::zeros(b.p.len() + 1);
    g[0] = b.q;
    g.rows_mut(1, b.p.len()).copy_from(&b.p);
    g
}

fn direction(v: &Vector, sign: f64) -> Vector {
    let mut d = Vector::zeros(v.len() + 1);
    d[0] = sign;
    d.rows_mut(1, v.len()).copy_from(&(v * sign));
    d
}

/// Branches at the start point with the indices of the minimizing ones.
fn start_branches(sheets: &SheetSet, t0: f64, x0: &Vector, tol: &Tolerances) -> Result<(Vec<Branch>, Vec<usize>)> {
    let all: Vec<usize> = (0..sheets.len()).collect();
    let br = sheets.eval(&all, t0, x0, &sheets.guesses, tol)?;
    let umin = br.iter().map(|b| b.value).fold(f64::INFINITY, f64::min);
    let tie = tol.tie_tol(umin);
    let minimizing: Vec<usize> = (0..br.len()).filter(|&i| br[i].value <= umin + tie).collect();
    if minimizing.len() < 2 {
        return Err(Error::Precondition(format!(
            "start point is not irregular: {} minimizing branch(es)",
            minimizing.len()
        )));
    }
    if let Some(b) = minimizing.iter().map(|&i| &br[i]).find(|b| b.det_xz.abs() <= tol.tol_conj) {
        return Err(Error::Precondition(format!("branch {} is conjugate at the start point", b.index)));
    }
    Ok((br, minimizing))
}

struct Tracer<'a> {
    spec: &'a ProblemSpec,
    sheets: &'a SheetSet,
    /// Active sheets; the last one is the reference `k′`.
    active: Vec<usize>,
    inactive: Vec<usize>,
    sign: f64,
    /// Initial support gap of the inactive branches.
    sigma: Option<f64>,
    tol: &'a Tolerances,
}

enum Eval {
    Ok(Box<(SingularSample, Vec<Vector>)>),
    Stop(StopReason, String),
}

impl Tracer<'_> {
    fn energy(&self, t: f64, x: &Vector, br: &[Branch]) -> Result<EnergyMinimum> {
        let verts: Vec<Vector> = br.iter().map(gradient).collect();
        let face = FaceSelection::whole(verts)?;
        minimal_energy_element(self.spec, t, x, &face, br[br.len() - 1].value, self.tol)
    }

    fn velocity(&self, t: f64, x: &Vector, guesses: &[Vector]) -> Result<Vector> {
        let br = self.sheets.eval(&self.active, t, x, guesses, self.tol)?;
        Ok(self.energy(t, x, &br)?.v)
    }

    fn sample(&self, t: f64, x: &Vector, guesses: &[Vector]) -> Eval {
        let tol = self.tol;
        let mut tracked = self.active.clone();
        tracked.extend(&self.inactive);
        let br = match self.sheets.eval(&tracked, t, x, guesses, tol) {
            Ok(b) => b,
            Err(Error::Precondition(m)) => return Eval::Stop(StopReason::Conjugacy, m),
            Err(e) => return Eval::Stop(StopReason::BranchCrossing, format!("branch continuation failed: {e}")),
        };
        let k = self.active.len();
        let (act, inact) = br.split_at(k);
        let min_det = act.iter().map(|b| b.det_xz.abs()).fold(f64::INFINITY, f64::min);
        if min_det <= tol.tol_conj {
            return Eval::Stop(StopReason::Conjugacy, format!("|det X_z| = {min_det:e}"));
        }
        let verts: Vec<Vector> = act.iter().map(gradient).collect();
        let ind = geometric_independence(&verts, tol.tol_rank);
        if !ind.independent {
            return Eval::Stop(StopReason::RankLoss, format!("rank margin {:e}", ind.margin));
        }
        let em = match self.energy(t, x, act) {
            Ok(em) => em,
            Err(e) => return Eval::Stop(StopReason::IntegrationFailure, e.to_string()),
        };
        let vref = act[k - 1].value;
        let eq = act.iter().map(|b| (b.value - vref).abs()).fold(0.0, f64::max);
        if eq > tol.sing_tol(vref) {
            return Eval::Stop(StopReason::IntegrationFailure, format!("branch equality residual {eq:e}"));
        }
        if !em.interior {
            return Eval::Stop(StopReason::FaceBoundary, format!("interior margin {:e}", em.margin));
        }
        let dir = direction(&em.v, self.sign);
        let gref = &verts[k - 1];
        let inactive_margin = inact.iter().map(|b| (gradient(b) - gref).dot(&dir)).reduce(f64::min);
        if let Some(b) = inact.iter().find(|b| b.value < vref - tol.tie_tol(vref)) {
            return Eval::Stop(StopReason::BranchCrossing, format!("inactive branch {} dropped below the face", b.index));
        }
        if let (Some(m), Some(sigma)) = (inactive_margin, self.sigma) {
            if m < 0.5 * sigma {
                return Eval::Stop(StopReason::FaceBoundary, format!("inactive support margin {m:e} below σ/2"));
            }
        }
        let mut next = guesses.to_vec();
        for (b, &i) in br.iter().zip(&tracked) {
            next[i] = b.seed.clone();
        }
        Eval::Ok(Box::new((
            SingularSample {
                t,
                x: x.clone(),
                lambda: em.lambda,
                q: em.q,
                p: em.p,
                v: em.v,
                values: act.iter().map(|b| b.value).collect(),
                equality_residual: eq,
                inactive_margin,
                rank_margin: ind.margin,
                interior_margin: em.margin,
                dets: act.iter().map(|b| b.det_xz).collect(),
            },
            next,
        )))
    }

    /// A branch not among the tracked ones has become minimizing.
    fn revalidate(&self, s: &SingularSample) -> Option<String> {
        let set = shoot_minimizers(
            self.spec,
            s.t,
            &s.x,
            &default_box(self.spec, s.t, &s.x),
            default_grid_per_dim(self.spec.n),
            self.tol,
        )
        .ok()?;
        let u = set.u?;
        let vref = s.values[s.values.len() - 1];
        (u < vref - 10.0 * self.tol.tie_tol(vref)).then(|| format!("global minimum {u} lies below the traced branches {vref}"))
    }

    /// Integrates from the start sample for `horizon` in the tracer's direction.
    fn run(&self, t0: f64, x0: &Vector, horizon: f64) -> Result<(Vec<SingularSample>, StopReason, Option<String>)> {
        let tol = self.tol;
        let (first, mut guesses) = match self.sample(t0, x0, &self.sheets.guesses) {
            Eval::Ok(b) => *b,
            Eval::Stop(r, m) => return Err(Error::Precondition(format!("start sample rejected ({}): {m}", r.as_str()))),
        };
        let steps = ((horizon / tol.dt) - 1e-9).ceil().max(1.0) as usize;
        let h = self.sign * horizon / steps as f64;
        let mut out = vec![first];
        for j in 0..steps {
            let cur = &out[out.len() - 1];
            let (t, x) = (cur.t, cur.x.clone());
            let rk = || -> Result<Vector> {
                let k1 = self.velocity(t, &x, &guesses)?;
                let k2 = self.velocity(t + 0.5 * h, &(&x + &k1 * (0.5 * h)), &guesses)?;
                let k3 = self.velocity(t + 0.5 * h, &(&x + &k2 * (0.5 * h)), &guesses)?;
                let k4 = self.velocity(t + h, &(&x + &k3 * h), &guesses)?;
                Ok(&x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
            };
            let xn = match rk() {
                Ok(xn) => xn,
                Err(Error::Precondition(m)) => return Ok((out, StopReason::Conjugacy, Some(m))),
                Err(e) => return Ok((out, StopReason::BranchCrossing, Some(format!("step failed: {e}")))),
            };
            let tn = if j + 1 == steps { t0 + self.sign * horizon } else { t + h };
            match self.sample(tn, &xn, &guesses) {
                Eval::Ok(b) => {
                    let (s, g) = *b;
                    if (j + 1) % REVALIDATE_EVERY == 0 {
                        if let Some(m) = self.revalidate(&s) {
                            return Ok((out, StopReason::BranchCrossing, Some(m)));
                        }
                    }
                    guesses = g;
                    out.push(s);
                }
                Eval::Stop(r, m) => return Ok((out, r, Some(m))),
            }
        }
        Ok((out, StopReason::Horizon, None))
    }
}

/// Forward strict singular characteristic `ẋ = v̄(t, x)` from an irregular
/// point, on the face exposed by `(1, v̄)`.
pub fn trace_forward(
    spec: &ProblemSpec,
    t0: f64,
    x0: &Vector,
    sheets: &SheetSet,
    horizon: f64,
    tol: &Tolerances,
) -> Result<SingularCurve> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
    }
    let (br, minimizing) = start_branches(sheets, t0, x0, tol)?;
    let full: Vec<Vector> = minimizing.iter().map(|&i| gradient(&br[i])).collect();
    let whole = FaceSelection::whole(full.clone())?;
    let em_full = minimal_energy_element(spec, t0, x0, &whole, br[minimizing[minimizing.len() - 1]].value, tol)?;
    let face = exposed_face(&full, &direction(&em_full.v, 1.0), tol.face_tol)?;
    let active: Vec<usize> = face.active.iter().map(|&i| minimizing[i]).collect();
    let em = minimal_energy_element(spec, t0, x0, &face, br[active[active.len() - 1]].value, tol)?;
    let report = nondegeneracy_check(&face, &em, &full, tol);
    if let Some(why) = report.forward_failure() {
        return Err(Error::Precondition(why.into()));
    }
    let inactive: Vec<usize> = minimizing.iter().copied().filter(|i| !active.contains(i)).collect();
    let tracer = Tracer {
        spec,
        sheets,
        active: active.clone(),
        inactive,
        sign: 1.0,
        sigma: report.forward_slack,
        tol,
    };
    let (samples, stop, detail) = tracer.run(t0, x0, horizon)?;
    Ok(SingularCurve {
        direction: TraceDirection::Forward,
        active,
        samples,
        stop,
        stop_detail: detail,
        backward_stop: None,
        backward_detail: None,
        hypotheses: report,
        start_velocity_residual: None,
    })
}

/// Subsets of `0..k` of size ≥ 2, largest first, lexicographic within a size.
fn subsets_desc(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for size in (2..=k).rev() {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.clone());
            let Some(i) = (0..size).rev().find(|&i| idx[i] != i + k - size) else {
                break;
            };
            idx[i] += 1;
            for j in i + 1..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

/// Backward strict singular characteristic ending at `(t₀, x₀)`. The
/// terminal datum `(q₀, p₀)` must be minimax; without one, the largest
/// minimax face is chosen (ties broken lexicographically).
pub fn trace_backward(
    spec: &ProblemSpec,
    t0: f64,
    x0: &Vector,
    sheets: &SheetSet,
    chosen: Option<(f64, &Vector)>,
    horizon: f64,
    tol: &Tolerances,
) -> Result<SingularCurve> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
    }
    let (br, minimizing) = start_branches(sheets, t0, x0, tol)?;
    let full: Vec<Vector> = minimizing.iter().map(|&i| gradient(&br[i])).collect();
    let u = minimizing.iter().map(|&i| br[i].value).fold(f64::INFINITY, f64::min);
    let (face, em, residual) = match chosen {
        Some((q0, p0)) => {
            if p0.len() != spec.n {
                return Err(Error::InvalidInput("terminal momentum has the wrong dimension".into()));
            }
            let hp = spec.velocity(t0, x0, p0, u)?;
            let face = exposed_face(&full, &direction(&hp, -1.0), tol.face_tol)?;
            if face.k() < 2 {
                return Err(Error::NotMinimax("the supplied datum exposes a single vertex".into()));
            }
            let active_ref = minimizing[face.active[face.k() - 1]];
            let em = minimal_energy_element(spec, t0, x0, &face, br[active_ref].value, tol)?;
            let gap = (em.q - q0).abs().max((&em.p - p0).amax());
            if gap > tol.tol_ri * (1.0 + p0.amax().max(q0.abs())) {
                return Err(Error::NotMinimax(format!(
                    "the supplied datum differs from the minimal-energy element of its face by {gap:e}"
                )));
            }
            let res = (&em.v - hp).amax();
            (face, em, Some(res))
        }
        None => {
            if full.len() > MAX_AUTO_BRANCHES {
                return Err(Error::Precondition(format!(
                    "automatic face search supports at most {MAX_AUTO_BRANCHES} branches, got {}",
                    full.len()
                )));
            }
            let mut pick = None;
            for sub in subsets_desc(full.len()) {
                let Ok(face) = FaceSelection::from_active(full.clone(), sub.clone()) else {
                    continue;
                };
                let vref = br[minimizing[sub[sub.len() - 1]]].value;
                let Ok(em) = minimal_energy_element(spec, t0, x0, &face, vref, tol) else {
                    continue;
                };
                let (ok, slack) = exposure(&full, &sub, &direction(&em.v, -1.0), tol.face_tol);
                if ok && em.interior {
                    let mut face = face;
                    face.theta = Some(direction(&em.v, -1.0));
                    face.slack = slack;
                    pick = Some((face, em));
                    break;
                }
            }
            let (face, em) = pick.ok_or_else(|| Error::NotMinimax("no face admits a minimax element".into()))?;
            (face, em, None)
        }
    };
    let report = nondegeneracy_check(&face, &em, &full, tol);
    if !report.backward_ok() {
        return Err(Error::NotMinimax(format!("backward hypotheses fail: {report:?}")));
    }
    let active: Vec<usize> = face.active.iter().map(|&i| minimizing[i]).collect();
    let inactive: Vec<usize> = minimizing.iter().copied().filter(|i| !active.contains(i)).collect();
    let tracer = Tracer {
        spec,
        sheets,
        active: active.clone(),
        inactive,
        sign: -1.0,
        sigma: report.backward_slack,
        tol,
    };
    let (mut samples, stop, detail) = tracer.run(t0, x0, horizon)?;
    samples.reverse();
    Ok(SingularCurve {
        direction: TraceDirection::Backward,
        active,
        samples,
        stop,
        stop_detail: detail,
        backward_stop: None,
        backward_detail: None,
        hypotheses: report,
        start_velocity_residual: residual,
    })
}

/// Bidirectional trace through a point with exactly two minimizers.
pub fn trace_two_branch(
    spec: &ProblemSpec,
    t0: f64,
    x0: &Vector,
    horizon_fwd: f64,
    horizon_bwd: f64,
    tol: &Tolerances,
) -> Result<SingularCurve> {
    let c = classify_point(spec, t0, x0, tol, None)?;
    if c.kind != PointKind::IrregularOnly || c.k != 2 {
        return Err(Error::Precondition(format!(
            "two-branch tracing needs an irregular, non-conjugate point with k = 2, got {} with k = {}",
            c.kind.as_str(),
            c.k
        )));
    }
    let sheets = SheetSet::from_point(spec, t0, x0, tol)?;
    let fwd = trace_forward(spec, t0, x0, &sheets, horizon_fwd, tol)?;
    let mut samples = Vec::new();
    let (mut bstop, mut bdetail) = (None, None);
    if horizon_bwd > 0.0 {
        let bwd = trace_backward(spec, t0, x0, &sheets, None, horizon_bwd, tol)?;
        samples.extend(bwd.samples.into_iter().take_while(|s| s.t < t0));
        bstop = Some(bwd.stop);
        bdetail = bwd.stop_detail;
    }
    samples.extend(fwd.samples);
    Ok(SingularCurve {
        direction: TraceDirection::Bidirectional,
        active: fwd.active,
        samples,
        stop: fwd.stop,
        stop_detail: fwd.stop_detail,
        backward_stop: bstop,
        backward_detail: bdetail,
        hypotheses: fwd.hypotheses,
        start_velocity_residual: None,
    })
}
