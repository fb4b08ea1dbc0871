use serde::Serialize;

use crate::flow::{caratheodory_solve_with, SampledCurve};
use crate::optimize::bfgs;
use crate::problem::ProblemSpec;
use crate::{Error, Result, Vector};

/// Optimal discretised curve for `h_L(t₁, t₂, x, y, u_start)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FundamentalSolutionResult {
    pub t1: f64,
    pub t2: f64,
    pub x: Vector,
    pub y: Vector,
    pub u_start: f64,
    /// Piecewise-linear optimiser with `nodes` nodes.
    pub curve: SampledCurve,
    /// `u_ξ(t₂) − u_start` along the optimiser.
    pub h_l: f64,
    /// `u_ξ` at the curve nodes.
    pub u_xi: Vec<f64>,
    /// Discrete Herglotz residual: the cost gradient divided by the segment length.
    pub herglotz_residual: f64,
    pub certified: bool,
}

/// Nested refinement study with Richardson extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinedFundamental {
    pub levels: Vec<FundamentalSolutionResult>,
    /// `(4 h_fine − h_coarse)/3` on the two finest levels.
    pub extrapolated: f64,
    /// `h_L` non-increasing along the levels (up to 1e-10).
    pub monotone: bool,
}

/// Free-left-endpoint minimisation of `u₀(y) + h_L(0, t, y, x, u₀(y))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeEndpointResult {
    pub y_star: Vector,
    pub value: f64,
    pub extrapolated: f64,
    pub levels: Vec<(usize, f64)>,
    pub certified: bool,
}

struct Discretisation {
    t1: f64,
    t2: f64,
    segments: usize,
    substeps: usize,
}

impl Discretisation {
    fn new(t1: f64, t2: f64, nodes: usize, dt: f64) -> Self {
        let segments = nodes - 1;
        let total = ((t2 - t1) / dt).ceil().max(1.0) as usize;
        let total = total.next_power_of_two().max(segments);
        Self {
            t1,
            t2,
            segments,
            substeps: total.div_ceil(segments),
        }
    }

    fn h(&self) -> f64 {
        (self.t2 - self.t1) / self.segments as f64
    }

    fn node_time(&self, j: usize) -> f64 {
        if j == self.segments {
            self.t2
        } else {
            self.t1 + self.h() * j as f64
        }
    }
}

/// Cost `u_ξ(t₂)` and its exact gradient with respect to the free nodes,
/// obtained by forward-mode differentiation of the RK4 recursion.
///
/// `free` lists which node indices are optimisation variables. When node 0
/// is free, the initial value is `u₀(q₀)`.
fn cost_and_gradient(
    spec: &ProblemSpec,
    d: &Discretisation,
    nodes: &[Vector],
    free: &[usize],
    u_start: Option<f64>,
) -> (f64, Vector) {
    let n = spec.n;
    let nv = free.len() * n;
    let slot = |j: usize| free.iter().position(|&f| f == j);
    let (mut u, mut g) = match u_start {
        Some(u0) => (u0, Vector::zeros(nv)),
        None => {
            let mut g = Vector::zeros(nv);
            if let Some(k) = slot(0) {
                g.rows_mut(k * n, n).copy_from(&spec.du0(&nodes[0]));
            }
            (spec.u0(&nodes[0]), g)
        }
    };
    let h = d.h();
    for j in 0..d.segments {
        let (a, b) = (&nodes[j], &nodes[j + 1]);
        let vel = (b - a) / h;
        let t0 = d.node_time(j);
        let hs = (d.node_time(j + 1) - t0) / d.substeps as f64;
        let (sa, sb) = (slot(j), slot(j + 1));
        let rhs = |s: f64, uu: f64, gg: &Vector| -> Option<(f64, Vector)> {
            let r = (s - t0) / h;
            let xi = a * (1.0 - r) + b * r;
            let jet = spec.lagrangian_jet(s, &xi, &vel, uu, 1).ok()?;
            let mut dg = gg * jet.l_u;
            if let Some(k) = sa {
                let mut blk = dg.rows_mut(k * n, n);
                blk += &jet.l_x * (1.0 - r) - &jet.l_v / h;
            }
            if let Some(k) = sb {
                let mut blk = dg.rows_mut(k * n, n);
                blk += &jet.l_x * r + &jet.l_v / h;
            }
            Some((jet.value, dg))
        };
        for i in 0..d.substeps {
            let s = t0 + i as f64 * hs;
            let Some((k1, g1)) = rhs(s, u, &g) else {
                return (f64::NAN, g);
            };
            let Some((k2, g2)) = rhs(s + 0.5 * hs, u + 0.5 * hs * k1, &(&g + &g1 * (0.5 * hs))) else {
                return (f64::NAN, g);
            };
            let Some((k3, g3)) = rhs(s + 0.5 * hs, u + 0.5 * hs * k2, &(&g + &g2 * (0.5 * hs))) else {
                return (f64::NAN, g);
            };
            let Some((k4, g4)) = rhs(s + hs, u + hs * k3, &(&g + &g3 * hs)) else {
                return (f64::NAN, g);
            };
            u += hs / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            g += (g1 + g2 * 2.0 + g3 * 2.0 + g4) * (hs / 6.0);
        }
    }
    (u, g)
}

fn unpack_nodes(template: &[Vector], free: &[usize], w: &Vector) -> Vec<Vector> {
    let n = template[0].len();
    let mut nodes = template.to_vec();
    for (k, &j) in free.iter().enumerate() {
        nodes[j] = w.rows(k * n, n).into_owned();
    }
    nodes
}

fn pack_nodes(nodes: &[Vector], free: &[usize]) -> Vector {
    let n = nodes[0].len();
    let mut w = Vector::zeros(free.len() * n);
    for (k, &j) in free.iter().enumerate() {
        w.rows_mut(k * n, n).copy_from(&nodes[j]);
    }
    w
}

/// Inserts midpoints so a curve with `m` nodes becomes one with `2m − 1`.
fn prolong(nodes: &[Vector]) -> Vec<Vector> {
    let mut out = Vec::with_capacity(2 * nodes.len() - 1);
    for w in nodes.windows(2) {
        out.push(w[0].clone());
        out.push((&w[0] + &w[1]) * 0.5);
    }
    out.push(nodes.last().expect("non-empty").clone());
    out
}

const DT: f64 = 1e-2;
const G_TOL: f64 = 1e-12;
const G_TOL_LOOSE: f64 = 1e-8;

fn check_args(t1: f64, t2: f64, nodes: usize) -> Result<()> {
    if !(t2 > t1 && t1 >= 0.0) {
        return Err(Error::InvalidInput(format!("need 0 <= t1 < t2, got [{t1}, {t2}]")));
    }
    if nodes < 2 {
        return Err(Error::InvalidInput("at least two curve nodes are required".into()));
    }
    Ok(())
}

fn solve_fixed(
    spec: &ProblemSpec,
    t1: f64,
    t2: f64,
    x: &Vector,
    y: &Vector,
    u_start: f64,
    init: Vec<Vector>,
) -> Result<FundamentalSolutionResult> {
    let m = init.len();
    let d = Discretisation::new(t1, t2, m, DT);
    let free: Vec<usize> = (1..m - 1).collect();
    let fg = |w: &Vector| cost_and_gradient(spec, &d, &unpack_nodes(&init, &free, w), &free, Some(u_start));
    let res = bfgs(fg, pack_nodes(&init, &free), G_TOL, G_TOL_LOOSE, 2000);
    let nodes = unpack_nodes(&init, &free, &res.x);
    let times: Vec<f64> = (0..m).map(|j| d.node_time(j)).collect();
    let curve = SampledCurve::new(times, nodes)?;
    let carath = caratheodory_solve_with(spec, &curve, u_start, d.h() / d.substeps as f64 * (1.0 + 1e-12))?;
    Ok(FundamentalSolutionResult {
        t1,
        t2,
        x: x.clone(),
        y: y.clone(),
        u_start,
        h_l: carath.terminal() - u_start,
        u_xi: carath.u,
        herglotz_residual: res.grad_norm / d.h(),
        certified: res.converged,
        curve,
    })
}

/// `h_L(t₁, t₂, x, y, u_start)` by direct optimisation over piecewise-linear
/// curves with `nodes` nodes from `x` to `y`.
pub fn fundamental_solution(
    spec: &ProblemSpec,
    t1: f64,
    t2: f64,
    x: &Vector,
    y: &Vector,
    u_start: f64,
    nodes: usize,
) -> Result<FundamentalSolutionResult> {
    check_args(t1, t2, nodes)?;
    let init = (0..nodes)
        .map(|j| x + (y - x) * (j as f64 / (nodes - 1) as f64))
        .collect();
    solve_fixed(spec, t1, t2, x, y, u_start, init)
}

/// Solves on nested levels, each with `2m − 1` nodes of the previous one
/// and warm-started from it, then extrapolates.
pub fn fundamental_solution_refined(
    spec: &ProblemSpec,
    t1: f64,
    t2: f64,
    x: &Vector,
    y: &Vector,
    u_start: f64,
    coarsest_nodes: usize,
    levels: usize,
) -> Result<RefinedFundamental> {
    check_args(t1, t2, coarsest_nodes)?;
    let mut out: Vec<FundamentalSolutionResult> = Vec::with_capacity(levels);
    for _ in 0..levels.max(1) {
        let r = match out.last() {
            None => fundamental_solution(spec, t1, t2, x, y, u_start, coarsest_nodes)?,
            Some(prev) => solve_fixed(spec, t1, t2, x, y, u_start, prolong(&prev.curve.points))?,
        };
        out.push(r);
    }
    let monotone = out.windows(2).all(|w| w[1].h_l <= w[0].h_l + 1e-10);
    let extrapolated = match out.len() {
        1 => out[0].h_l,
        k => (4.0 * out[k - 1].h_l - out[k - 2].h_l) / 3.0,
    };
    Ok(RefinedFundamental {
        levels: out,
        extrapolated,
        monotone,
    })
}

/// `inf_y { u₀(y) + h_L(0, t, y, x, u₀(y)) }` from each start guess for `y`,
/// keeping the best. Levels use `m − 1 ∈ {8, 16, 32}` segments.
pub fn fundamental_solution_free(
    spec: &ProblemSpec,
    t: f64,
    x: &Vector,
    starts: &[Vector],
) -> Result<FreeEndpointResult> {
    check_args(0.0, t, 9)?;
    if starts.is_empty() {
        return Err(Error::InvalidInput("at least one start point is required".into()));
    }
    let mut best: Option<FreeEndpointResult> = None;
    for y0 in starts {
        let mut nodes: Vec<Vector> = (0..9).map(|j| y0 + (x - y0) * (j as f64 / 8.0)).collect();
        let mut levels = Vec::new();
        let mut certified = true;
        for level in 0..3 {
            if level > 0 {
                nodes = prolong(&nodes);
            }
            let m = nodes.len();
            let d = Discretisation::new(0.0, t, m, DT);
            let free: Vec<usize> = (0..m - 1).collect();
            let template = nodes.clone();
            let fg = |w: &Vector| cost_and_gradient(spec, &d, &unpack_nodes(&template, &free, w), &free, None);
            let res = bfgs(fg, pack_nodes(&nodes, &free), G_TOL, G_TOL_LOOSE, 4000);
            certified &= res.converged;
            nodes = unpack_nodes(&template, &free, &res.x);
            levels.push((m, res.f));
        }
        let k = levels.len();
        let extrapolated = (4.0 * levels[k - 1].1 - levels[k - 2].1) / 3.0;
        let cand = FreeEndpointResult {
            y_star: nodes[0].clone(),
            value: levels[k - 1].1,
            extrapolated,
            levels,
            certified,
        };
        if best.as_ref().is_none_or(|b| cand.value < b.value) {
            best = Some(cand);
        }
    }
    Ok(best.expect("at least one start"))
}
