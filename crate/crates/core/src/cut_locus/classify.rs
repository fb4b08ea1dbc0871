use rayon::prelude::*;
use serde::Serialize;

use crate::bolza::{default_box, default_grid_per_dim, shoot_minimizers, MinimizerSet};
use crate::problem::ProblemSpec;
use crate::{Error, Result, Tolerances, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Regular,
    IrregularOnly,
    ConjugateOnly,
    IrregularAndConjugate,
    /// Shooting failed; see the diagnostic.
    Unknown,
}

impl PointKind {
    pub fn is_singular(self) -> bool {
        matches!(
            self,
            PointKind::IrregularOnly | PointKind::ConjugateOnly | PointKind::IrregularAndConjugate
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PointKind::Regular => "regular",
            PointKind::IrregularOnly => "irregular_only",
            PointKind::ConjugateOnly => "conjugate_only",
            PointKind::IrregularAndConjugate => "irregular_and_conjugate",
            PointKind::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub t: f64,
    pub x: Vector,
    pub kind: PointKind,
    /// Number of minimizing characteristics.
    pub k: usize,
    /// `det X_z` of each minimizing entry.
    pub dets: Vec<f64>,
    /// `min |det X_z| − tol_conj`; small values flag near-threshold decisions.
    pub margin: f64,
    pub tol_conj: f64,
    pub tie_rel: f64,
    pub minimizers: Option<MinimizerSet>,
    pub diagnostic: Option<String>,
}

impl Classification {
    pub fn min_abs_det(&self) -> f64 {
        self.dets.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min)
    }
}

/// Classifies `(t, x)` from the minimizing characteristics found by shooting.
pub fn classify_point(
    spec: &ProblemSpec,
    t: f64,
    x: &Vector,
    tol: &Tolerances,
    grid_per_dim: Option<usize>,
) -> Result<Classification> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("classification needs t > 0, got {t}")));
    }
    let grid = grid_per_dim.unwrap_or_else(|| default_grid_per_dim(spec.n));
    let unknown = |msg: String| Classification {
        t,
        x: x.clone(),
        kind: PointKind::Unknown,
        k: 0,
        dets: Vec::new(),
        margin: f64::NAN,
        tol_conj: tol.tol_conj,
        tie_rel: tol.tie_rel,
        minimizers: None,
        diagnostic: Some(msg),
    };
    let set = match shoot_minimizers(spec, t, x, &default_box(spec, t, x), grid, tol) {
        Ok(set) => set,
        Err(e @ Error::InvalidInput(_)) => return Err(e),
        Err(e) => return Ok(unknown(e.to_string())),
    };
    if set.u.is_none() {
        let msg = set.diagnostic.clone().unwrap_or_default();
        let mut c = unknown(msg);
        c.minimizers = Some(set);
        return Ok(c);
    }
    let dets: Vec<f64> = set.minimizers().map(|e| e.det_xz).collect();
    let k = dets.len();
    let min_det = dets.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min);
    let conjugate = min_det <= tol.tol_conj;
    let kind = match (k >= 2, conjugate) {
        (false, false) => PointKind::Regular,
        (true, false) => PointKind::IrregularOnly,
        (false, true) => PointKind::ConjugateOnly,
        (true, true) => PointKind::IrregularAndConjugate,
    };
    Ok(Classification {
        t,
        x: x.clone(),
        kind,
        k,
        margin: min_det - tol.tol_conj,
        dets,
        tol_conj: tol.tol_conj,
        tie_rel: tol.tie_rel,
        minimizers: Some(set),
        diagnostic: None,
    })
}

/// Classifies every point of `points` (in order).
pub fn classify_map(
    spec: &ProblemSpec,
    points: &[(f64, Vector)],
    tol: &Tolerances,
    grid_per_dim: Option<usize>,
) -> Result<Vec<Classification>> {
    points
        .par_iter()
        .map(|(t, x)| {
            let mut c = classify_point(spec, *t, x, tol, grid_per_dim)?;
            c.minimizers = None;
            Ok(c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::InitialDatum;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    #[test]
    fn focusing_regular_before_focal_time() {
        let s = ProblemSpec::focusing(1, 1.0).unwrap();
        let c = classify_point(&s, 0.5, &v(&[0.3]), &Tolerances::default(), None).unwrap();
        assert_eq!(c.kind, PointKind::Regular);
        assert_eq!(c.k, 1);
        assert!((c.dets[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn focusing_focal_point_is_conjugate() {
        // every seed reaches x = 0 at t = 1 with the same value
        let s = ProblemSpec::focusing(1, 1.0).unwrap();
        let c = classify_point(&s, 1.0, &v(&[0.0]), &Tolerances::default(), None).unwrap();
        assert_eq!(c.kind, PointKind::IrregularAndConjugate);
        assert!(c.k >= 2);
        assert!(c.min_abs_det() <= 1e-7);
    }

    #[test]
    fn double_well_classification() {
        let s = ProblemSpec::classical(1, InitialDatum::DoubleWell).unwrap();
        let tol = Tolerances::default();
        let c = classify_point(&s, 2.0, &v(&[0.0]), &tol, None).unwrap();
        assert_eq!(c.kind, PointKind::IrregularOnly);
        assert_eq!(c.k, 2);
        let c = classify_point(&s, 1.0, &v(&[0.0]), &tol, None).unwrap();
        assert_eq!(c.kind, PointKind::ConjugateOnly);
        assert_eq!(c.k, 1);
    }

    #[test]
    fn non_positive_time_rejected() {
        let s = ProblemSpec::focusing(1, 1.0).unwrap();
        assert!(classify_point(&s, 0.0, &v(&[0.0]), &Tolerances::default(), None).is_err());
    }
}
