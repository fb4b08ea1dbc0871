use crate::{Matrix, Vector};

#[derive(Debug, Clone)]
pub(crate) struct BfgsResult {
    pub x: Vector,
    pub f: f64,
    pub grad_norm: f64,
    pub converged: bool,
}

/// Dense BFGS with Armijo backtracking. `fg` returns value and gradient.
///
/// Stops at `|g|∞ ≤ g_tol`, or after five iterations without a relative
/// decrease of `f` above round-off; in the latter case the run counts as
/// converged when `|g|∞ ≤ loose_tol`.
pub(crate) fn bfgs<F>(fg: F, x0: Vector, g_tol: f64, loose_tol: f64, max_iter: usize) -> BfgsResult
where
    F: Fn(&Vector) -> (f64, Vector),
{
    let d = x0.len();
    let mut x = x0;
    let (mut f, mut g) = fg(&x);
    if d == 0 {
        return BfgsResult { x, f, grad_norm: 0.0, converged: true };
    }
    let mut hinv = Matrix::identity(d, d);
    let mut it = 0;
    let mut stalled = 0;
    while it < max_iter && stalled < 5 {
        if g.amax() <= g_tol {
            return BfgsResult { grad_norm: g.amax(), x, f, converged: true };
        }
        let mut dir = -(&hinv * &g);
        if dir.dot(&g) >= 0.0 {
            hinv = Matrix::identity(d, d);
            dir = -g.clone();
        }
        let slope = dir.dot(&g);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + &dir * alpha;
            let (fn_, gn) = fg(&xn);
            if fn_.is_finite() && fn_ <= f + 1e-4 * alpha * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else { break };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-16 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let i = Matrix::identity(d, d);
            let a = &i - &s * y.transpose() * rho;
            let b = &i - &y * s.transpose() * rho;
            hinv = &a * &hinv * &b + &s * s.transpose() * rho;
        }
        if f - fn_ <= 1e-15 * (1.0 + f.abs()) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        x = xn;
        f = fn_;
        g = gn;
        it += 1;
    }
    let grad_norm = g.amax();
    let converged = grad_norm <= g_tol || (stalled >= 5 && grad_norm <= loose_tol);
    BfgsResult { x, f, grad_norm, converged }
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub(crate) fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .expect("non-empty")
}
