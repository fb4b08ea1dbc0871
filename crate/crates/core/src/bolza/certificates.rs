use serde::Serialize;

use super::shooting::value;
use crate::flow::{caratheodory_solve, SampledCurve};
use crate::problem::ProblemSpec;
use crate::{Error, Result, Tolerances, Vector};

/// Both sides of `u(t, ξ(t)) ≤ u_ξ(t)` where `u_ξ(t′) = u(t′, ξ(t′))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DppCertificate {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`; nonnegative up to tolerance, zero along minimizers.
    pub slack: f64,
}

pub fn dpp_certificate(
    spec: &ProblemSpec,
    curve: &SampledCurve,
    t_prime: f64,
    t: f64,
    tol: &Tolerances,
) -> Result<DppCertificate> {
    if !(0.0 <= t_prime && t_prime < t) {
        return Err(Error::InvalidInput(format!("need 0 <= t' < t, got t' = {t_prime}, t = {t}")));
    }
    let piece = curve.restrict(t_prime, t)?;
    let start = &piece.points[0];
    let end = piece.points.last().expect("non-empty");
    let (u_start, _) = value(spec, t_prime, start, None, None, tol)?;
    let (lhs, _) = value(spec, t, end, None, None, tol)?;
    let rhs = caratheodory_solve(spec, &piece, u_start)?.terminal();
    Ok(DppCertificate {
        lhs,
        rhs,
        slack: rhs - lhs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemiconcavityReport {
    /// `(u(t,x+h) + u(t,x−h) − 2u(t,x)) / |h|²` per sample.
    pub ratios: Vec<f64>,
    /// Smallest constant valid for every sample.
    pub c_fit: f64,
    /// Samples that failed to evaluate or exceeded the bound.
    pub failures: Vec<(usize, String)>,
}

/// Second-difference probe of semiconcavity at `(t, x, h)` samples.
pub fn semiconcavity_probe(
    spec: &ProblemSpec,
    samples: &[(f64, Vector, Vector)],
    bound: Option<f64>,
    tol: &Tolerances,
) -> SemiconcavityReport {
    let mut ratios = Vec::with_capacity(samples.len());
    let mut failures = Vec::new();
    for (i, (t, x, h)) in samples.iter().enumerate() {
        let eval = |y: &Vector| value(spec, *t, y, None, None, tol).map(|r| r.0);
        match (eval(&(x + h)), eval(&(x - h)), eval(x)) {
            (Ok(a), Ok(b), Ok(c)) => {
                let r = (a + b - 2.0 * c) / h.norm_squared();
                if let Some(bd) = bound {
                    if r > bd {
                        failures.push((i, format!("ratio {r} exceeds bound {bd}")));
                    }
                }
                ratios.push(r);
            }
            (a, b, c) => {
                let msg = [a.err(), b.err(), c.err()]
                    .into_iter()
                    .flatten()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join("; ");
                failures.push((i, msg));
                ratios.push(f64::NAN);
            }
        }
    }
    let c_fit = ratios
        .iter()
        .copied()
        .filter(|r| r.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    SemiconcavityReport {
        ratios,
        c_fit,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bolza::shoot_minimizers;
    use crate::flow::integrate_lie;
    use crate::problem::InitialDatum;
    use crate::AxisBox;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    #[test]
    fn zigzag_has_positive_slack() {
        let s = ProblemSpec::classical(1, InitialDatum::Constant { c: 0.0 }).unwrap();
        let times: Vec<f64> = (0..=10).map(|j| j as f64 / 10.0).collect();
        let points = times
            .iter()
            .enumerate()
            .map(|(j, _)| v(&[if j % 2 == 1 { 0.1 } else { 0.0 }]))
            .collect();
        let zig = SampledCurve::new(times, points).unwrap();
        let c = dpp_certificate(&s, &zig, 0.0, 1.0, &Tolerances::default()).unwrap();
        assert!((c.slack - 0.5).abs() < 1e-10);
    }

    #[test]
    fn minimizer_has_zero_slack() {
        let s = ProblemSpec::classical(1, InitialDatum::Linear { a: vec![1.0] }).unwrap();
        let tol = Tolerances::default();
        let set = shoot_minimizers(&s, 1.0, &v(&[0.5]), &AxisBox::centered(&v(&[0.5]), 3.0), 11, &tol).unwrap();
        let z = &set.entries[0].seed;
        let tr = integrate_lie(&s, z, 1.0, tol.policy()).unwrap();
        let curve = SampledCurve::from_trajectory(&s, &tr).unwrap();
        let c = dpp_certificate(&s, &curve, 0.3, 1.0, &tol).unwrap();
        assert!(c.slack.abs() < 1e-8);
    }

    #[test]
    fn constant_datum_contact_constant_curve() {
        let s = ProblemSpec::contact(1, 1.0, InitialDatum::Constant { c: 2.0 }).unwrap();
        let still = SampledCurve::straight(0.0, 1.0, &v(&[0.3]), &v(&[0.3]), 5).unwrap();
        let c = dpp_certificate(&s, &still, 0.0, 1.0, &Tolerances::default()).unwrap();
        assert!(c.slack.abs() < 1e-8);
    }
}
