use serde::Serialize;

use super::lf::GridSolution;
use crate::{Result, Vector};

/// Grid nodes of one slice where one-sided slopes disagree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KinkSlice {
    pub t: f64,
    pub cells: Vec<Vec<usize>>,
    pub points: Vec<Vector>,
    pub jumps: Vec<f64>,
    /// Index into `cells` of the largest jump.
    pub peak: Option<usize>,
}

impl KinkSlice {
    pub fn peak_point(&self) -> Option<&Vector> {
        self.peak.map(|i| &self.points[i])
    }
}

/// Flags interior nodes where `|forward − backward slope| > jump_tol` on
/// some axis.
pub fn detect_singular_grid(sol: &GridSolution, jump_tol: f64) -> Vec<KinkSlice> {
    let n = sol.dim();
    let mut strides = vec![1; n];
    for a in (0..n.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * sol.shape[a + 1];
    }
    sol.times
        .iter()
        .zip(&sol.slices)
        .map(|(&t, u)| {
            let mut out = KinkSlice {
                t,
                cells: Vec::new(),
                points: Vec::new(),
                jumps: Vec::new(),
                peak: None,
            };
            for f in 0..u.len() {
                let multi = sol.multi_index(f);
                if multi.iter().zip(&sol.shape).any(|(&i, &m)| i == 0 || i + 1 == m) {
                    continue;
                }
                let jump = (0..n)
                    .map(|a| {
                        let s = strides[a];
                        ((u[f + s] - u[f]) - (u[f] - u[f - s])).abs() / sol.dx[a]
                    })
                    .fold(0.0, f64::max);
                if jump > jump_tol {
                    if out.peak.is_none_or(|p| jump > out.jumps[p]) {
                        out.peak = Some(out.cells.len());
                    }
                    out.points.push(sol.node(&multi));
                    out.cells.push(multi);
                    out.jumps.push(jump);
                }
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareStats {
    pub count: usize,
    pub max: f64,
    pub mean: f64,
    /// `None` for points outside the grid.
    pub per_point: Vec<Option<f64>>,
    pub excluded: Vec<usize>,
}

/// Absolute differences between interpolated grid values and `values`.
pub fn compare(sol: &GridSolution, points: &[(f64, Vector)], values: &[f64]) -> Result<CompareStats> {
    if points.len() != values.len() {
        return Err(crate::Error::InvalidInput("one value per point is required".into()));
    }
    let per_point: Vec<Option<f64>> = points
        .iter()
        .zip(values)
        .map(|((t, x), v)| sol.interpolate(*t, x).map(|g| (g - v).abs()))
        .collect();
    let errs: Vec<f64> = per_point.iter().flatten().copied().collect();
    let excluded = (0..per_point.len()).filter(|&i| per_point[i].is_none()).collect();
    Ok(CompareStats {
        count: errs.len(),
        max: errs.iter().copied().fold(0.0, f64::max),
        mean: if errs.is_empty() { 0.0 } else { errs.iter().sum::<f64>() / errs.len() as f64 },
        per_point,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_oracle::lf_solve;
    use crate::problem::{InitialDatum, ProblemSpec};
    use crate::AxisBox;

    fn two_linear(a1: f64, a2: f64) -> ProblemSpec {
        ProblemSpec::classical(
            1,
            InitialDatum::MinOf {
                pieces: vec![InitialDatum::Linear { a: vec![a1] }, InitialDatum::Linear { a: vec![a2] }],
            },
        )
        .unwrap()
    }

    #[test]
    fn symmetric_kink_at_origin() {
        let s = two_linear(1.0, -1.0);
        let b = AxisBox::new(vec![-2.0], vec![2.0]).unwrap();
        let dx = 0.01;
        let sol = lf_solve(&s, &b, dx, 0.004, 1.0).unwrap();
        for k in detect_singular_grid(&sol, 10.0 * dx).iter().skip(1) {
            assert!(!k.cells.is_empty());
            assert!(k.peak_point().unwrap()[0].abs() <= dx * 1.0001);
        }
    }

    #[test]
    fn asymmetric_kink_tracks_line() {
        let s = two_linear(2.0, 0.0);
        let b = AxisBox::new(vec![-1.0], vec![3.0]).unwrap();
        let dx = 0.01;
        let sol = lf_solve(&s, &b, dx, 0.002, 1.0).unwrap();
        for k in detect_singular_grid(&sol, 10.0 * dx).iter().skip(5) {
            let x = k.peak_point().unwrap()[0];
            assert!((x - k.t).abs() <= 2.0 * dx, "t = {}, x = {x}", k.t);
        }
    }

    #[test]
    fn smooth_focusing_has_no_flags() {
        let s = ProblemSpec::focusing(1, 1.0).unwrap();
        let b = AxisBox::new(vec![-1.0], vec![1.0]).unwrap();
        let dx = 0.01;
        let sol = lf_solve(&s, &b, dx, 0.001, 0.5).unwrap();
        assert!(detect_singular_grid(&sol, 10.0 * dx).iter().all(|k| k.cells.is_empty()));
    }

    #[test]
    fn focusing_values() {
        let s = ProblemSpec::focusing(1, 1.0).unwrap();
        // the box holds the domain of dependence z = x/(1 − t) of every point
        let b = AxisBox::new(vec![-1.5], vec![1.5]).unwrap();
        let sol = lf_solve(&s, &b, 1.0 / 200.0, 4e-4, 0.8).unwrap();
        let pts: Vec<(f64, Vector)> = (0..50)
            .map(|i| {
                let t = 0.8 * (i + 1) as f64 / 50.0;
                let x = 0.25 * (2.0 * (i as f64 * 0.37).fract() - 1.0);
                (t, Vector::from_vec(vec![x]))
            })
            .collect();
        let vals: Vec<f64> = pts.iter().map(|(t, x)| -x[0] * x[0] / (2.0 * (1.0 - t))).collect();
        let st = compare(&sol, &pts, &vals).unwrap();
        assert_eq!(st.count, 50);
        assert!(st.max <= 0.02, "{}", st.max);
    }

    #[test]
    fn empty_and_outside() {
        let s = ProblemSpec::focusing(1, 1.0).unwrap();
        let b = AxisBox::new(vec![-1.0], vec![1.0]).unwrap();
        let sol = lf_solve(&s, &b, 0.1, 0.01, 0.1).unwrap();
        let st = compare(&sol, &[], &[]).unwrap();
        assert_eq!((st.count, st.max, st.mean), (0, 0.0, 0.0));
        let st = compare(&sol, &[(0.05, Vector::from_vec(vec![3.0]))], &[0.0]).unwrap();
        assert_eq!(st.excluded, vec![0]);
    }
}
