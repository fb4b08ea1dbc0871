use serde::Serialize;

use crate::flow::{flow_terminal_from, integrate_variational, VarTrajectory};
use crate::linalg::near_kernel;
use crate::optimize::golden_section;
use crate::problem::ProblemSpec;
use crate::{Error, Result, Tolerances, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjugateDetection {
    SignChange,
    MagnitudeDip,
}

/// First zero of `det X_z(·; z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjugateTime {
    pub t_star: f64,
    /// Unit kernel direction of `X_z(t*)`.
    pub theta: Vector,
    pub det: f64,
    /// `|U_z(t*) θ|`, zero at a genuine conjugate time.
    pub uz_theta: f64,
    /// `|P_z(t*) θ|`, nonzero at a genuine conjugate time.
    pub pz_theta: f64,
    pub detection: ConjugateDetection,
}

fn det_at(spec: &ProblemSpec, tr: &VarTrajectory, j: usize, s: f64, tol: &Tolerances) -> Result<f64> {
    Ok(flow_terminal_from(spec, tr.char.times[j], &tr.state(j), s, tol.policy())?
        .xz
        .determinant())
}

/// Scans `det X_z` along the seed `z` up to `t_max` and refines the first
/// zero by bisection (sign change) or golden section on `|det|` (dip).
pub fn conjugate_time(spec: &ProblemSpec, z: &Vector, t_max: f64, tol: &Tolerances) -> Result<Option<ConjugateTime>> {
    if !(t_max > 0.0) {
        return Err(Error::InvalidInput(format!("t_max must be positive, got {t_max}")));
    }
    let tr = integrate_variational(spec, z, t_max, tol.policy())?;
    let times = &tr.char.times;
    let dets: Vec<f64> = (0..tr.len()).map(|j| tr.det_xz(j)).collect();
    let m = dets.len();
    let mut found: Option<(f64, ConjugateDetection)> = None;
    for j in 1..m {
        if dets[j - 1] * dets[j] < 0.0 {
            let (mut a, mut b) = (times[j - 1], times[j]);
            let sa = dets[j - 1].signum();
            while b - a > tol.tol_time {
                let mid = 0.5 * (a + b);
                let d = det_at(spec, &tr, j - 1, mid, tol)?;
                if d == 0.0 {
                    a = mid;
                    b = mid;
                } else if d.signum() == sa {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            found = Some((0.5 * (a + b), ConjugateDetection::SignChange));
            break;
        }
        let local_min = dets[j].abs() < dets[j - 1].abs() && (j + 1 == m || dets[j].abs() <= dets[j + 1].abs());
        if dets[j].abs() <= tol.tol_conj || local_min {
            let hi = times[(j + 1).min(m - 1)];
            let f = |s: f64| det_at(spec, &tr, j - 1, s, tol).map(f64::abs).unwrap_or(f64::INFINITY);
            let (s, fmin) = golden_section(f, times[j - 1], hi, tol.tol_time);
            if fmin <= tol.tol_conj {
                found = Some((s, ConjugateDetection::MagnitudeDip));
                break;
            }
        }
    }
    let Some((t_star, detection)) = found else {
        return Ok(None);
    };
    let jb = times.partition_point(|&s| s <= t_star).saturating_sub(1).min(m - 1);
    let st = flow_terminal_from(spec, times[jb], &tr.state(jb), t_star, tol.policy())?;
    let (_, theta) = near_kernel(&st.xz);
    Ok(Some(ConjugateTime {
        t_star,
        det: st.xz.determinant(),
        uz_theta: st.uz.dot(&theta).abs(),
        pz_theta: (&st.pz * &theta).norm(),
        theta,
        detection,
    }))
}
