use serde::Serialize;

use super::ode::rk4_step;
use super::trajectory::CharTrajectory;
use crate::problem::ProblemSpec;
use crate::{Error, Result, Vector};

/// A curve `ξ` given by samples on a strictly increasing time grid.
///
/// Without velocity samples it is piecewise linear, so every node may be a
/// kink. With velocities it is piecewise cubic Hermite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledCurve {
    pub times: Vec<f64>,
    pub points: Vec<Vector>,
    pub velocities: Option<Vec<Vector>>,
}

impl SampledCurve {
    pub fn new(times: Vec<f64>, points: Vec<Vector>) -> Result<Self> {
        if times.len() < 2 || times.len() != points.len() {
            return Err(Error::InvalidInput(format!(
                "curve needs at least two nodes with matching samples ({} times, {} points)",
                times.len(),
                points.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("curve times must be strictly increasing".into()));
        }
        let n = points[0].len();
        if points.iter().any(|p| p.len() != n || p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("curve points must be finite and of equal dimension".into()));
        }
        Ok(Self {
            times,
            points,
            velocities: None,
        })
    }

    pub fn with_velocities(mut self, velocities: Vec<Vector>) -> Result<Self> {
        if velocities.len() != self.times.len() {
            return Err(Error::InvalidInput("one velocity sample per node is required".into()));
        }
        self.velocities = Some(velocities);
        Ok(self)
    }

    /// Straight segment from `x` at `t1` to `y` at `t2` with `m` nodes.
    pub fn straight(t1: f64, t2: f64, x: &Vector, y: &Vector, m: usize) -> Result<Self> {
        let m = m.max(2);
        let times = (0..m).map(|j| t1 + (t2 - t1) * j as f64 / (m - 1) as f64).collect();
        let points = (0..m)
            .map(|j| x + (y - x) * (j as f64 / (m - 1) as f64))
            .collect();
        Self::new(times, points)
    }

    /// The spatial projection of a characteristic, with `ξ̇ = H_p`.
    pub fn from_trajectory(spec: &ProblemSpec, traj: &CharTrajectory) -> Result<Self> {
        let v = traj.velocities(spec)?;
        Self::new(traj.times.clone(), traj.x.clone())?.with_velocities(v)
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    fn segment(&self, s: f64) -> usize {
        match self.times.partition_point(|&t| t <= s) {
            0 => 0,
            k => (k - 1).min(self.times.len() - 2),
        }
    }

    /// Position and velocity on segment `j` at time `s`.
    pub fn eval_on(&self, j: usize, s: f64) -> (Vector, Vector) {
        let (t0, t1) = (self.times[j], self.times[j + 1]);
        let h = t1 - t0;
        let (a, b) = (&self.points[j], &self.points[j + 1]);
        match &self.velocities {
            None => {
                let r = (s - t0) / h;
                (a + (b - a) * r, (b - a) / h)
            }
            Some(v) => {
                let r = (s - t0) / h;
                let (va, vb) = (&v[j], &v[j + 1]);
                let h00 = 2.0 * r.powi(3) - 3.0 * r * r + 1.0;
                let h10 = r.powi(3) - 2.0 * r * r + r;
                let h01 = -2.0 * r.powi(3) + 3.0 * r * r;
                let h11 = r.powi(3) - r * r;
                let d00 = (6.0 * r * r - 6.0 * r) / h;
                let d10 = 3.0 * r * r - 4.0 * r + 1.0;
                let d01 = (-6.0 * r * r + 6.0 * r) / h;
                let d11 = 3.0 * r * r - 2.0 * r;
                (
                    a * h00 + va * (h * h10) + b * h01 + vb * (h * h11),
                    a * d00 + va * d10 + b * d01 + vb * d11,
                )
            }
        }
    }

    pub fn eval(&self, s: f64) -> (Vector, Vector) {
        self.eval_on(self.segment(s), s)
    }

    /// The curve restricted to `[a, b]`, with new nodes at the endpoints.
    pub fn restrict(&self, a: f64, b: f64) -> Result<Self> {
        if !(a < b) || a < self.t_start() - 1e-12 || b > self.t_end() + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "cannot restrict curve on [{}, {}] to [{a}, {b}]",
                self.t_start(),
                self.t_end()
            )));
        }
        let eps = 1e-12 * (1.0 + b.abs());
        let mut times = vec![a];
        let mut points = vec![self.eval(a).0];
        let mut vels = vec![self.eval(a).1];
        for (j, &s) in self.times.iter().enumerate() {
            if s > a + eps && s < b - eps {
                times.push(s);
                points.push(self.points[j].clone());
                // left-segment derivative keeps kinks at the node
                vels.push(self.eval_on(j.saturating_sub(1).min(self.times.len() - 2), s).1);
            }
        }
        let jb = self.segment(b - eps);
        let (pb, vb) = self.eval_on(jb, b);
        times.push(b);
        points.push(pb);
        vels.push(vb);
        let out = Self::new(times, points)?;
        match self.velocities {
            Some(_) => out.with_velocities(vels),
            None => Ok(out),
        }
    }

    /// Largest difference quotient `|ξ(s_{j+1}) − ξ(s_j)| / (s_{j+1} − s_j)`.
    pub fn lipschitz_estimate(&self) -> f64 {
        self.times
            .windows(2)
            .zip(self.points.windows(2))
            .map(|(t, p)| (&p[1] - &p[0]).norm() / (t[1] - t[0]))
            .fold(0.0, f64::max)
    }
}

/// Solution of `u̇ = L(s, ξ, ξ̇, u)` along a sampled curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaratheodoryResult {
    pub curve: SampledCurve,
    /// `u_ξ` at the curve's nodes.
    pub u: Vec<f64>,
    /// Step-doubling estimate of the integration error at the final node.
    pub residual: f64,
}

impl CaratheodoryResult {
    pub fn terminal(&self) -> f64 {
        *self.u.last().expect("non-empty")
    }
}

fn integrate_segments(spec: &ProblemSpec, curve: &SampledCurve, u_init: f64, max_h: f64) -> Result<Vec<f64>> {
    let mut u = vec![u_init];
    let mut cur = u_init;
    for j in 0..curve.times.len() - 1 {
        let (t0, t1) = (curve.times[j], curve.times[j + 1]);
        let k = ((t1 - t0) / max_h - 1e-9).ceil().max(1.0) as usize;
        let h = (t1 - t0) / k as f64;
        let f = |s: f64, y: &Vector| -> Result<Vector> {
            let (x, v) = curve.eval_on(j, s);
            let l = spec.l(s, &x, &v, y[0]);
            if !l.is_finite() {
                return Err(Error::domain("L along curve", s));
            }
            Ok(Vector::from_element(1, l))
        };
        let mut y = Vector::from_element(1, cur);
        for i in 0..k {
            y = rk4_step(&f, t0 + i as f64 * h, &y, h)?;
        }
        cur = y[0];
        u.push(cur);
    }
    Ok(u)
}

/// Integrates the Carathéodory equation along `curve` with per-segment RK4
/// substeps of length at most `max_h`, never straddling a node.
pub fn caratheodory_solve_with(spec: &ProblemSpec, curve: &SampledCurve, u_init: f64, max_h: f64) -> Result<CaratheodoryResult> {
    if curve.dim() != spec.n {
        return Err(Error::InvalidInput(format!(
            "curve has dimension {}, problem has n = {}",
            curve.dim(),
            spec.n
        )));
    }
    if curve.t_start() < 0.0 {
        return Err(Error::InvalidInput("curve must start at a nonnegative time".into()));
    }
    if !curve.lipschitz_estimate().is_finite() || !u_init.is_finite() {
        return Err(Error::InvalidInput("curve must be Lipschitz and u_init finite".into()));
    }
    let fine = integrate_segments(spec, curve, u_init, max_h * 0.5)?;
    let coarse = integrate_segments(spec, curve, u_init, max_h)?;
    let residual = (fine.last().unwrap() - coarse.last().unwrap()).abs() / 15.0;
    Ok(CaratheodoryResult {
        curve: curve.clone(),
        u: fine,
        residual,
    })
}

pub fn caratheodory_solve(spec: &ProblemSpec, curve: &SampledCurve, u_init: f64) -> Result<CaratheodoryResult> {
    caratheodory_solve_with(spec, curve, u_init, 1e-2)
}

/// Defects of the Herglotz equation along a characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HerglotzResidual {
    /// `max |d/ds L_v − (L_x + L_u L_v)|∞` over interior samples.
    pub euler_lagrange: f64,
    /// `max |P − L_v(s, ξ, ξ̇, u_ξ)|∞`.
    pub momentum: f64,
}

impl HerglotzResidual {
    pub fn max(&self) -> f64 {
        self.euler_lagrange.max(self.momentum)
    }
}

/// Derivative weights of the Lagrange interpolant through `nodes` at `nodes[i]`.
fn lagrange_derivative_weights(nodes: &[f64], i: usize) -> Vec<f64> {
    let m = nodes.len();
    let mut w = vec![0.0; m];
    for k in 0..m {
        if k == i {
            w[k] = (0..m).filter(|&j| j != i).map(|j| 1.0 / (nodes[i] - nodes[j])).sum();
        } else {
            let num: f64 = (0..m)
                .filter(|&j| j != i && j != k)
                .map(|j| nodes[i] - nodes[j])
                .product();
            let den: f64 = (0..m).filter(|&j| j != k).map(|j| nodes[k] - nodes[j]).product();
            w[k] = num / den;
        }
    }
    w
}

fn stencil_derivative(times: &[f64], values: &[Vector], j: usize) -> Vector {
    let m = times.len();
    let start = j.saturating_sub(2).min(m - 5);
    let nodes = &times[start..start + 5];
    let w = lagrange_derivative_weights(nodes, j - start);
    let mut d = Vector::zeros(values[0].len());
    for (k, wk) in w.iter().enumerate() {
        d += &values[start + k] * *wk;
    }
    d
}

/// Checks the Herglotz equation along `traj`, reconstructing `ξ̇` from the
/// sampled positions with five-point stencils.
pub fn herglotz_residual(spec: &ProblemSpec, traj: &CharTrajectory) -> Result<HerglotzResidual> {
    let m = traj.len();
    if m < 5 {
        return Err(Error::InvalidInput(format!(
            "Herglotz residual needs at least 5 samples, got {m}"
        )));
    }
    let xdot: Vec<Vector> = (0..m).map(|j| stencil_derivative(&traj.times, &traj.x, j)).collect();
    let mut lv = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    let mut momentum: f64 = 0.0;
    for j in 0..m {
        let jet = spec.lagrangian_jet(traj.times[j], &traj.x[j], &xdot[j], traj.u[j], 1)?;
        momentum = momentum.max((&traj.p[j] - &jet.l_v).amax());
        rhs.push(&jet.l_x + &jet.l_v * jet.l_u);
        lv.push(jet.l_v);
    }
    let mut el: f64 = 0.0;
    for j in 2..m - 2 {
        let d = stencil_derivative(&traj.times, &lv, j);
        el = el.max((d - &rhs[j]).amax());
    }
    Ok(HerglotzResidual {
        euler_lagrange: el,
        momentum,
    })
}
