use serde::Serialize;

use super::classify::{Classification, PointKind};
use crate::bolza::newton_root;
use crate::problem::ProblemSpec;
use crate::{Error, Result, Tolerances, Vector};

/// A local smooth sheet `v_i` of the value function near a non-conjugate point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub index: usize,
    pub sheet: usize,
    /// Root of `X(t; z) = x` on this sheet.
    pub seed: Vector,
    pub value: f64,
    /// `∂_t v_i = −H(t, x, p_i, v_i)`.
    pub q: f64,
    /// `∇v_i = P(t; z_i)`.
    pub p: Vector,
    pub det_xz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchSet {
    pub t: f64,
    pub x: Vector,
    pub branches: Vec<Branch>,
    /// `(index, reason)` for minimizers that did not yield a branch.
    pub rejected: Vec<(usize, String)>,
}

impl BranchSet {
    /// `min_i v_i`.
    pub fn min_value(&self) -> Option<f64> {
        self.branches.iter().map(|b| b.value).reduce(f64::min)
    }
}

/// Continues the branch through `guess` on `sheet` to the point `(t, x)`.
pub fn solve_branch(
    spec: &ProblemSpec,
    sheet: usize,
    index: usize,
    t: f64,
    x: &Vector,
    guess: &Vector,
    tol: &Tolerances,
) -> Result<Branch> {
    let sheets = spec.sheets();
    let s = sheets
        .get(sheet)
        .ok_or_else(|| Error::InvalidInput(format!("sheet {sheet} out of range")))?;
    let root = newton_root(s, t, x, guess, tol, None)?;
    let det = root.state.xz.determinant();
    if det.abs() <= tol.tol_conj {
        return Err(Error::Precondition(format!(
            "|det X_z| = {:e} at the root is within tol_conj",
            det.abs()
        )));
    }
    let p = root.state.char.p.clone();
    let v = root.state.char.u;
    let q = -s.h(t, x, &p, v);
    Ok(Branch {
        index,
        sheet,
        seed: root.z,
        value: v,
        q,
        p,
        det_xz: det,
    })
}

/// One branch per minimizing characteristic of a regular or irregular,
/// non-conjugate point.
pub fn local_branches(
    spec: &ProblemSpec,
    classification: &Classification,
    tol: &Tolerances,
) -> Result<BranchSet> {
    if !matches!(classification.kind, PointKind::Regular | PointKind::IrregularOnly) {
        return Err(Error::Precondition(format!(
            "local branches need a point off the conjugate locus, got {}",
            classification.kind.as_str()
        )));
    }
    let set = classification
        .minimizers
        .as_ref()
        .ok_or_else(|| Error::Precondition("classification carries no minimizer set".into()))?;
    let (t, x) = (classification.t, &classification.x);
    let mut out = BranchSet {
        t,
        x: x.clone(),
        branches: Vec::new(),
        rejected: Vec::new(),
    };
    for (i, e) in set.minimizers().enumerate() {
        match solve_branch(spec, e.sheet, i, t, x, &e.seed, tol) {
            Ok(b) => out.branches.push(b),
            Err(err) => out.rejected.push((i, err.to_string())),
        }
    }
    Ok(out)
}
