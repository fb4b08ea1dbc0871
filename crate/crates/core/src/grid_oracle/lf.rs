use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::problem::ProblemSpec;
use crate::{AxisBox, Error, Result, Vector};

/// Largest admissible `Δt (Σ ν_a/Δx_a + max|H_u|)`.
pub const CFL_LIMIT: f64 = 0.9;

/// Time slices of a Lax–Friedrichs run. Nodes are stored with the last
/// axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSolution {
    pub bounds: AxisBox,
    pub shape: Vec<usize>,
    pub dx: Vec<f64>,
    pub dt: f64,
    pub t_final: f64,
    pub times: Vec<f64>,
    pub slices: Vec<Vec<f64>>,
    /// Largest CFL number met during the run.
    pub cfl: f64,
    /// Viscosity coefficients of the last step.
    pub viscosity: Vec<f64>,
    /// Set when `H_u < 0` was met: the scheme is then not monotone in `u`.
    pub advisory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LfOptions {
    /// Keep every `save_every`-th slice (the final slice is always kept).
    pub save_every: usize,
    /// Fixed viscosity per axis instead of the per-step `max |H_{p_a}|`.
    pub viscosity: Option<Vec<f64>>,
}

impl Default for LfOptions {
    fn default() -> Self {
        Self {
            save_every: 1,
            viscosity: None,
        }
    }
}

impl GridSolution {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.shape.len()];
        for a in (0..self.shape.len()).rev() {
            out[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
        out
    }

    pub fn node(&self, multi: &[usize]) -> Vector {
        Vector::from_iterator(
            multi.len(),
            multi.iter().enumerate().map(|(a, &i)| self.bounds.min[a] + i as f64 * self.dx[a]),
        )
    }

    /// Multilinear in space, linear in time; `None` outside the grid.
    pub fn interpolate(&self, t: f64, x: &Vector) -> Option<f64> {
        if x.len() != self.dim() || !self.bounds.contains(x) || !(t >= self.times[0] && t <= self.t_final) {
            return None;
        }
        let j = self.times.partition_point(|&s| s <= t);
        let (j0, j1) = if j >= self.times.len() { (j - 1, j - 1) } else { (j - 1, j) };
        let w = if j0 == j1 { 0.0 } else { (t - self.times[j0]) / (self.times[j1] - self.times[j0]) };
        let a = self.spatial(&self.slices[j0], x);
        let b = self.spatial(&self.slices[j1], x);
        Some(a * (1.0 - w) + b * w)
    }

    fn spatial(&self, u: &[f64], x: &Vector) -> f64 {
        let n = self.dim();
        let mut base = vec![0; n];
        let mut frac = vec![0.0; n];
        for a in 0..n {
            let s = (x[a] - self.bounds.min[a]) / self.dx[a];
            let i = (s.floor() as usize).min(self.shape[a] - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = base.clone();
            for a in 0..n {
                if corner >> a & 1 == 1 {
                    idx[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            acc += w * u[self.index(&idx)];
        }
        acc
    }

    /// One row per node of slice `j`: `x*, u`.
    pub fn write_slice_csv<W: Write>(&self, j: usize, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.dim()).map(|a| format!("x{a}")).collect();
        header.push("u".into());
        wr.write_record(&header)?;
        for (flat, u) in self.slices[j].iter().enumerate() {
            let x = self.node(&self.multi_index(flat));
            let mut r: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            r.push(u.to_string());
            wr.write_record(&r)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn shape_for(bounds: &AxisBox, dx: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    if !(dx > 0.0 && dx.is_finite()) {
        return Err(Error::InvalidInput(format!("grid spacing must be positive, got {dx}")));
    }
    let mut shape = Vec::new();
    let mut h = Vec::new();
    for a in 0..bounds.dim() {
        let w = bounds.max[a] - bounds.min[a];
        let n = (w / dx).round() as usize + 1;
        if n < 3 {
            return Err(Error::InvalidInput(format!("axis {a} has fewer than 3 nodes")));
        }
        shape.push(n);
        h.push(w / (n - 1) as f64);
    }
    Ok((shape, h))
}

struct Stencil {
    shape: Vec<usize>,
    strides: Vec<usize>,
}

impl Stencil {
    fn new(shape: &[usize]) -> Self {
        let mut strides = vec![1; shape.len()];
        for a in (0..shape.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        Self {
            shape: shape.to_vec(),
            strides,
        }
    }

    fn coord(&self, flat: usize, a: usize) -> usize {
        flat / self.strides[a] % self.shape[a]
    }

    fn interior(&self, flat: usize) -> bool {
        (0..self.shape.len()).all(|a| {
            let i = self.coord(flat, a);
            i > 0 && i + 1 < self.shape[a]
        })
    }
}

/// Node values, central gradients and Hamiltonian data at one slice.
struct SliceData {
    h: Vec<f64>,
    hp: Vec<Vector>,
    hu: Vec<f64>,
}

fn slice_data(spec: &ProblemSpec, sol: &GridSolution, st: &Stencil, u: &[f64], t: f64) -> Result<SliceData> {
    let n = sol.dim();
    let rows: Vec<Result<(f64, Vector, f64)>> = (0..u.len())
        .into_par_iter()
        .map(|flat| {
            if !st.interior(flat) {
                return Ok((0.0, Vector::zeros(n), 0.0));
            }
            let multi = sol.multi_index(flat);
            let x = sol.node(&multi);
            let p = Vector::from_fn(n, |a, _| {
                let s = st.strides[a];
                (u[flat + s] - u[flat - s]) / (2.0 * sol.dx[a])
            });
            let jet = spec.hamiltonian_jet(t, &x, &p, u[flat], 1)?;
            Ok((jet.value, jet.h_p, jet.h_u))
        })
        .collect();
    let mut d = SliceData {
        h: Vec::with_capacity(u.len()),
        hp: Vec::with_capacity(u.len()),
        hu: Vec::with_capacity(u.len()),
    };
    for r in rows {
        let (h, hp, hu) = r?;
        d.h.push(h);
        d.hp.push(hp);
        d.hu.push(hu);
    }
    Ok(d)
}

fn extrapolate_boundary(u: &mut [f64], st: &Stencil) {
    let n = st.shape.len();
    for a in 0..n {
        let s = st.strides[a];
        let m = st.shape[a];
        for flat in 0..u.len() {
            // later axes only fill nodes interior to earlier-filled ones
            if st.coord(flat, a) != 0 {
                continue;
            }
            if (a + 1..n).any(|b| {
                let i = st.coord(flat, b);
                i == 0 || i + 1 == st.shape[b]
            }) {
                continue;
            }
            let last = flat + (m - 1) * s;
            u[flat] = 2.0 * u[flat + s] - u[flat + 2 * s];
            u[last] = 2.0 * u[last - s] - u[last - 2 * s];
        }
    }
}

/// Largest stable `Δt` estimated on the initial slice, times `safety`.
pub fn suggest_dt(spec: &ProblemSpec, bounds: &AxisBox, dx: f64, safety: f64) -> Result<f64> {
    let (shape, h) = shape_for(bounds, dx)?;
    let sol = empty_solution(spec, bounds, shape, h, 0.0, 0.0);
    let st = Stencil::new(&sol.shape);
    let d = slice_data(spec, &sol, &st, &sol.slices[0], 0.0)?;
    let rate = rate(&sol, &st, &d, None);
    Ok(if rate > 0.0 { safety * CFL_LIMIT / rate } else { f64::INFINITY })
}

fn empty_solution(spec: &ProblemSpec, bounds: &AxisBox, shape: Vec<usize>, dx: Vec<f64>, dt: f64, t_final: f64) -> GridSolution {
    let mut sol = GridSolution {
        bounds: bounds.clone(),
        shape,
        dx,
        dt,
        t_final,
        times: vec![0.0],
        slices: Vec::new(),
        cfl: 0.0,
        viscosity: Vec::new(),
        advisory: false,
    };
    let u0 = (0..sol.len()).map(|f| spec.u0(&sol.node(&sol.multi_index(f)))).collect();
    sol.slices.push(u0);
    sol
}

fn viscosity(sol: &GridSolution, st: &Stencil, d: &SliceData, fixed: Option<&[f64]>) -> Vec<f64> {
    if let Some(v) = fixed {
        return v.to_vec();
    }
    (0..sol.dim())
        .map(|a| {
            (0..d.hp.len())
                .filter(|&f| st.interior(f))
                .map(|f| d.hp[f][a].abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

fn rate(sol: &GridSolution, st: &Stencil, d: &SliceData, fixed: Option<&[f64]>) -> f64 {
    let nu = viscosity(sol, st, d, fixed);
    let hu = d.hu.iter().map(|v| v.abs()).fold(0.0, f64::max);
    nu.iter().zip(&sol.dx).map(|(v, h)| v / h).sum::<f64>() + hu
}

pub fn lf_solve(spec: &ProblemSpec, bounds: &AxisBox, dx: f64, dt: f64, t_final: f64) -> Result<GridSolution> {
    lf_solve_with(spec, bounds, dx, dt, t_final, &LfOptions::default())
}

/// Explicit Lax–Friedrichs run to `t_final`; the last step is shortened so
/// that it lands on `t_final`.
pub fn lf_solve_with(
    spec: &ProblemSpec,
    bounds: &AxisBox,
    dx: f64,
    dt: f64,
    t_final: f64,
    opts: &LfOptions,
) -> Result<GridSolution> {
    if !(1..=2).contains(&spec.n) || bounds.dim() != spec.n {
        return Err(Error::InvalidInput("the grid oracle supports boxes in 1 or 2 dimensions matching n".into()));
    }
    if !(dt > 0.0 && t_final >= 0.0 && t_final.is_finite()) || opts.save_every == 0 {
        return Err(Error::InvalidInput("need Δt > 0, T ≥ 0 and save_every ≥ 1".into()));
    }
    if let Some(v) = &opts.viscosity {
        if v.len() != spec.n || v.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::InvalidInput("fixed viscosity needs one nonnegative value per axis".into()));
        }
    }
    let (shape, h) = shape_for(bounds, dx)?;
    let mut sol = empty_solution(spec, bounds, shape, h, dt, t_final);
    let st = Stencil::new(&sol.shape);
    let steps = (t_final / dt - 1e-9).ceil().max(0.0) as usize;
    let mut u = sol.slices[0].clone();
    let mut t = 0.0;
    for m in 0..steps {
        let tau = if m + 1 == steps { t_final - t } else { dt };
        let d = slice_data(spec, &sol, &st, &u, t)?;
        let nu = viscosity(&sol, &st, &d, opts.viscosity.as_deref());
        let c = tau * rate(&sol, &st, &d, opts.viscosity.as_deref());
        if d.hu.iter().any(|&v| v < 0.0) {
            sol.advisory = true;
        }
        if c > CFL_LIMIT {
            sol.t_final = t;
            if sol.times.last() != Some(&t) {
                sol.times.push(t);
                sol.slices.push(u);
            }
            return Err(Error::Cfl {
                t,
                cfl: c,
                partial: Box::new(sol),
            });
        }
        sol.cfl = sol.cfl.max(c);
        let next: Vec<f64> = (0..u.len())
            .into_par_iter()
            .map(|f| {
                if !st.interior(f) {
                    return u[f];
                }
                let visc: f64 = (0..sol.dim())
                    .map(|a| {
                        let s = st.strides[a];
                        nu[a] * (u[f + s] - 2.0 * u[f] + u[f - s]) / (2.0 * sol.dx[a])
                    })
                    .sum();
                u[f] - tau * (d.h[f] - visc)
            })
            .collect();
        u = next;
        extrapolate_boundary(&mut u, &st);
        t = if m + 1 == steps { t_final } else { t + dt };
        sol.viscosity = nu;
        if (m + 1) % opts.save_every == 0 || m + 1 == steps {
            sol.times.push(t);
            sol.slices.push(u.clone());
        }
    }
    Ok(sol)
}
