use std::fmt::Debug;
use std::sync::Arc;

use crate::cut_locus::{classify_point, local_branches, solve_branch, Branch, PointKind};
use crate::problem::ProblemSpec;
use crate::{Error, Result, Tolerances, Vector};

/// A smooth local branch `v_i` of the value function that can be evaluated
/// near a point. `guess` is the seed found at the previous evaluation.
pub trait BranchSheet: Debug + Send + Sync {
    fn eval(&self, t: f64, x: &Vector, guess: &Vector, tol: &Tolerances) -> Result<Branch>;
}

/// Branch defined by Newton continuation of a root of `X(t; z) = x`.
#[derive(Debug, Clone)]
pub struct CharacteristicSheet {
    pub spec: ProblemSpec,
    pub sheet: usize,
    pub index: usize,
}

impl BranchSheet for CharacteristicSheet {
    fn eval(&self, t: f64, x: &Vector, guess: &Vector, tol: &Tolerances) -> Result<Branch> {
        solve_branch(&self.spec, self.sheet, self.index, t, x, guess, tol)
    }
}

/// Closed-form branch of `|p|²/2 + λu` with linear datum `a·z`, i.e.
/// `v = e^{−λt} a·x − |a|² e^{−λt}(1 − e^{−λt})/(2λ)` (`λ = 0` allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDatumSheet {
    pub a: Vector,
    pub lambda: f64,
    pub index: usize,
}

impl LinearDatumSheet {
    /// `(1 − e^{−λt})/λ`, continuous at `λ = 0`.
    fn drift(&self, t: f64) -> f64 {
        if self.lambda.abs() * t < 1e-8 {
            t * (1.0 - 0.5 * self.lambda * t)
        } else {
            -(-self.lambda * t).exp_m1() / self.lambda
        }
    }
}

impl BranchSheet for LinearDatumSheet {
    fn eval(&self, t: f64, x: &Vector, _guess: &Vector, _tol: &Tolerances) -> Result<Branch> {
        if x.len() != self.a.len() {
            return Err(Error::InvalidInput("point and slope dimensions differ".into()));
        }
        let w = (-self.lambda * t).exp();
        let a2 = self.a.norm_squared();
        let d = self.drift(t);
        let value = w * self.a.dot(x) - 0.5 * a2 * w * d;
        let p = &self.a * w;
        let q = -(0.5 * p.norm_squared() + self.lambda * value);
        Ok(Branch {
            index: self.index,
            sheet: self.index,
            seed: x - &self.a * d,
            value,
            q,
            p,
            det_xz: 1.0,
        })
    }
}

/// The branches tracked along a singular characteristic, with the seeds of
/// their last evaluation.
#[derive(Debug, Clone)]
pub struct SheetSet {
    pub sheets: Vec<Arc<dyn BranchSheet>>,
    pub guesses: Vec<Vector>,
}

impl SheetSet {
    pub fn new(sheets: Vec<Arc<dyn BranchSheet>>, guesses: Vec<Vector>) -> Result<Self> {
        if sheets.len() != guesses.len() || sheets.is_empty() {
            return Err(Error::InvalidInput("need one guess per sheet and at least one sheet".into()));
        }
        Ok(Self { sheets, guesses })
    }

    /// Closed-form linear-datum branches.
    pub fn linear(slopes: &[Vector], lambda: f64) -> Result<Self> {
        let sheets: Vec<Arc<dyn BranchSheet>> = slopes
            .iter()
            .enumerate()
            .map(|(i, a)| Arc::new(LinearDatumSheet { a: a.clone(), lambda, index: i }) as Arc<dyn BranchSheet>)
            .collect();
        let guesses = slopes.iter().map(|a| Vector::zeros(a.len())).collect();
        Self::new(sheets, guesses)
    }

    /// Characteristic branches of the minimizers at a non-conjugate point.
    pub fn from_point(spec: &ProblemSpec, t: f64, x: &Vector, tol: &Tolerances) -> Result<Self> {
        let c = classify_point(spec, t, x, tol, None)?;
        if !matches!(c.kind, PointKind::Regular | PointKind::IrregularOnly) {
            return Err(Error::Precondition(format!(
                "branches need a point off the conjugate locus, got {}",
                c.kind.as_str()
            )));
        }
        let set = local_branches(spec, &c, tol)?;
        if let Some((i, why)) = set.rejected.first() {
            return Err(Error::Precondition(format!("branch {i} rejected: {why}")));
        }
        let sheets = set
            .branches
            .iter()
            .map(|b| {
                Arc::new(CharacteristicSheet {
                    spec: spec.clone(),
                    sheet: b.sheet,
                    index: b.index,
                }) as Arc<dyn BranchSheet>
            })
            .collect();
        let guesses = set.branches.iter().map(|b| b.seed.clone()).collect();
        Self::new(sheets, guesses)
    }

    pub fn len(&self) -> usize {
        self.sheets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sheets.is_empty()
    }

    /// Evaluates the listed sheets with the given guesses.
    pub fn eval(&self, which: &[usize], t: f64, x: &Vector, guesses: &[Vector], tol: &Tolerances) -> Result<Vec<Branch>> {
        which
            .iter()
            .map(|&i| self.sheets[i].eval(t, x, &guesses[i], tol))
            .collect()
    }
}
