use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vector};

/// Step-size control for all time integrations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepPolicy {
    /// Classical RK4 with the largest uniform step `≤ dt` per segment.
    Fixed { dt: f64 },
    /// Dormand–Prince 5(4) with mixed absolute/relative error control.
    Adaptive { tol: f64, h_init: f64, h_min: f64 },
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy::Fixed { dt: 1e-2 }
    }
}

impl StepPolicy {
    pub fn fixed(dt: f64) -> Self {
        StepPolicy::Fixed { dt }
    }

    pub fn adaptive(tol: f64) -> Self {
        StepPolicy::Adaptive {
            tol,
            h_init: 1e-2,
            h_min: 1e-12,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepPolicy::Fixed { dt } => dt.is_finite() && dt > 0.0,
            StepPolicy::Adaptive { tol, h_init, h_min } => {
                tol > 0.0 && h_init > 0.0 && h_min > 0.0 && h_min <= h_init
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid step policy {self:?}")))
        }
    }

    /// Formal order of the underlying scheme.
    pub fn order(&self) -> u8 {
        match self {
            StepPolicy::Fixed { .. } => 4,
            StepPolicy::Adaptive { .. } => 5,
        }
    }
}

pub(crate) fn check_state(y: &Vector, s: f64, what: &str) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::domain(what, s))
    }
}

pub(crate) fn rk4_step<F>(f: &F, s: f64, y: &Vector, h: f64) -> Result<Vector>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    let k1 = f(s, y)?;
    let k2 = f(s + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
    let k3 = f(s + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
    let k4 = f(s + h, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn dp_step<F>(f: &F, s: f64, y: &Vector, h: f64) -> Result<(Vector, f64)>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    let mut k: Vec<Vector> = Vec::with_capacity(7);
    for i in 0..7 {
        let mut yi = y.clone();
        for (j, kj) in k.iter().enumerate() {
            if DP_A[i][j] != 0.0 {
                yi += kj * (h * DP_A[i][j]);
            }
        }
        k.push(f(s + DP_C[i] * h, &yi)?);
    }
    let mut next = y.clone();
    let mut err = Vector::zeros(y.len());
    for i in 0..7 {
        next += &k[i] * (h * DP_B[i]);
        err += &k[i] * (h * DP_E[i]);
    }
    let scale = y.abs().sup(&next.abs());
    let e = err
        .iter()
        .zip(scale.iter())
        .map(|(e, s)| (e / (1.0 + s)).abs())
        .fold(0.0, f64::max);
    Ok((next, e))
}

/// Integrates `y' = f(s, y)` from `s0` to `s1` (either direction), forcing
/// every point of `breaks` strictly between them onto the output grid.
pub(crate) fn integrate<F>(
    f: F,
    s0: f64,
    y0: Vector,
    s1: f64,
    policy: StepPolicy,
    breaks: &[f64],
    what: &str,
) -> Result<(Vec<f64>, Vec<Vector>)>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    policy.validate()?;
    check_state(&y0, s0, what)?;
    let dir = if s1 >= s0 { 1.0 } else { -1.0 };
    let mut nodes: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|b| (b - s0) * dir > 0.0 && (s1 - b) * dir > 0.0)
        .collect();
    nodes.sort_by(|a, b| (a * dir).total_cmp(&(b * dir)));
    nodes.dedup();
    nodes.push(s1);

    let mut times = vec![s0];
    let mut states = vec![y0];
    let mut s = s0;
    for &end in &nodes {
        let len = end - s;
        if len == 0.0 {
            continue;
        }
        match policy {
            StepPolicy::Fixed { dt } => {
                let m = ((len.abs() / dt) - 1e-9).ceil().max(1.0) as usize;
                let h = len / m as f64;
                for j in 0..m {
                    let y = states.last().expect("non-empty");
                    let next = rk4_step(&f, s + j as f64 * h, y, h)?;
                    let sj = if j + 1 == m { end } else { s + (j + 1) as f64 * h };
                    check_state(&next, sj, what)?;
                    times.push(sj);
                    states.push(next);
                }
            }
            StepPolicy::Adaptive { tol, h_init, h_min } => {
                let mut h = h_init.min(len.abs()) * dir;
                let mut cur = s;
                while (end - cur) * dir > 1e-14 * (1.0 + end.abs()) {
                    if (cur + h - end) * dir > 0.0 {
                        h = end - cur;
                    }
                    let y = states.last().expect("non-empty");
                    let (next, err) = dp_step(&f, cur, y, h)?;
                    if err <= tol || h.abs() <= h_min {
                        if !next.iter().all(|v| v.is_finite()) {
                            return Err(Error::domain(what, cur + h));
                        }
                        cur = if ((cur + h) - end).abs() <= 1e-14 * (1.0 + end.abs()) {
                            end
                        } else {
                            cur + h
                        };
                        times.push(cur);
                        states.push(next);
                        let grow = if err == 0.0 { 5.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0) };
                        h *= grow;
                    } else {
                        let shrink = (0.9 * (tol / err).powf(0.25)).clamp(0.1, 0.9);
                        h *= shrink;
                        if h.abs() < h_min {
                            return Err(Error::Integration {
                                t_last: cur,
                                reason: format!("step size underflow (h < {h_min:e})"),
                            });
                        }
                    }
                }
            }
        }
        s = end;
    }
    Ok((times, states))
}

/// Terminal state only, without storing the grid.
pub(crate) fn integrate_terminal<F>(f: F, s0: f64, y0: Vector, s1: f64, policy: StepPolicy, what: &str) -> Result<Vector>
where
    F: Fn(f64, &Vector) -> Result<Vector>,
{
    match policy {
        StepPolicy::Fixed { dt } => {
            policy.validate()?;
            check_state(&y0, s0, what)?;
            let len = s1 - s0;
            if len == 0.0 {
                return Ok(y0);
            }
            let m = ((len.abs() / dt) - 1e-9).ceil().max(1.0) as usize;
            let h = len / m as f64;
            let mut y = y0;
            for j in 0..m {
                y = rk4_step(&f, s0 + j as f64 * h, &y, h)?;
                check_state(&y, s0 + (j + 1) as f64 * h, what)?;
            }
            Ok(y)
        }
        StepPolicy::Adaptive { .. } => {
            let (_, mut ys) = integrate(f, s0, y0, s1, policy, &[], what)?;
            Ok(ys.pop().expect("non-empty"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_s: f64, y: &Vector) -> Result<Vector> {
        Ok(-y)
    }

    #[test]
    fn rk4_fixed_reaches_endpoint_and_breaks() {
        let (t, y) = integrate(decay, 0.0, Vector::from_vec(vec![1.0]), 1.0, StepPolicy::fixed(0.03), &[0.5], "y").unwrap();
        assert_eq!(*t.last().unwrap(), 1.0);
        assert!(t.contains(&0.5));
        assert!((y.last().unwrap()[0] - (-1f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn adaptive_matches_exponential() {
        let (t, y) = integrate(decay, 0.0, Vector::from_vec(vec![1.0]), 3.0, StepPolicy::adaptive(1e-11), &[], "y").unwrap();
        assert_eq!(*t.last().unwrap(), 3.0);
        assert!((y.last().unwrap()[0] - (-3f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn backward_integration() {
        let (t, y) = integrate(decay, 1.0, Vector::from_vec(vec![1.0]), 0.0, StepPolicy::fixed(0.01), &[], "y").unwrap();
        assert_eq!(*t.last().unwrap(), 0.0);
        assert!((y.last().unwrap()[0] - 1f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn blowup_is_a_domain_error() {
        let f = |_s: f64, y: &Vector| Ok(y.map(|v| v * v));
        let err = integrate(f, 0.0, Vector::from_vec(vec![1.0]), 2.0, StepPolicy::fixed(0.01), &[], "y").unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
    }
}
