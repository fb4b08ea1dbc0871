use serde::Serialize;

use crate::{Error, Matrix, Result, Vector};

/// A face of `co {Dv_i}` given by a subset of the ambient gradients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceSelection {
    /// Ambient gradients `Dv_i = (q_i, p_i)`.
    pub vertices: Vec<Vector>,
    /// Indices into `vertices`, increasing.
    pub active: Vec<usize>,
    /// Exposing direction, when the face came from [`exposed_face`].
    pub theta: Option<Vector>,
    /// Gap between the support values of inactive and active vertices;
    /// `None` when every vertex is active.
    pub slack: Option<f64>,
}

impl FaceSelection {
    /// The face spanned by the listed vertices.
    pub fn from_active(vertices: Vec<Vector>, mut active: Vec<usize>) -> Result<Self> {
        active.sort_unstable();
        active.dedup();
        if active.is_empty() || active.iter().any(|&i| i >= vertices.len()) {
            return Err(Error::InvalidInput("active indices must be a nonempty subset of the vertices".into()));
        }
        Ok(Self {
            vertices,
            active,
            theta: None,
            slack: None,
        })
    }

    /// Every vertex active.
    pub fn whole(vertices: Vec<Vector>) -> Result<Self> {
        let all = (0..vertices.len()).collect();
        Self::from_active(vertices, all)
    }

    pub fn k(&self) -> usize {
        self.active.len()
    }

    pub fn active_vertices(&self) -> Vec<Vector> {
        self.active.iter().map(|&i| self.vertices[i].clone()).collect()
    }
}

/// Vertices minimizing `⟨·, θ⟩` within `face_tol`.
pub fn exposed_face(vertices: &[Vector], theta: &Vector, face_tol: f64) -> Result<FaceSelection> {
    if vertices.is_empty() {
        return Err(Error::InvalidInput("exposed face of an empty set".into()));
    }
    if theta.iter().all(|&c| c == 0.0) || vertices.iter().any(|v| v.len() != theta.len()) {
        return Err(Error::InvalidInput("direction must be nonzero and match the vertex dimension".into()));
    }
    let supp: Vec<f64> = vertices.iter().map(|v| v.dot(theta)).collect();
    let lo = supp.iter().copied().fold(f64::INFINITY, f64::min);
    let active: Vec<usize> = (0..supp.len()).filter(|&i| supp[i] <= lo + face_tol).collect();
    let slack = (0..supp.len())
        .filter(|i| !active.contains(i))
        .map(|i| supp[i] - lo)
        .reduce(f64::min);
    Ok(FaceSelection {
        vertices: vertices.to_vec(),
        active,
        theta: Some(theta.clone()),
        slack,
    })
}

/// Rank test on the differences `Dv_i − Dv_{k′}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub independent: bool,
    /// Smallest singular value of the difference matrix relative to
    /// `max(1, largest)`; 1 for a singleton face.
    pub margin: f64,
}

pub fn geometric_independence(points: &[Vector], tol_rank: f64) -> IndependenceReport {
    let k = points.len();
    if k <= 1 {
        return IndependenceReport {
            independent: true,
            margin: 1.0,
        };
    }
    let d = points[0].len();
    if k - 1 > d {
        return IndependenceReport {
            independent: false,
            margin: 0.0,
        };
    }
    let last = &points[k - 1];
    let m = Matrix::from_fn(d, k - 1, |r, c| points[c][r] - last[r]);
    let sv = m.svd(false, false).singular_values;
    let margin = sv.min() / sv.max().max(1.0);
    IndependenceReport {
        independent: margin > tol_rank,
        margin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    #[test]
    fn orthogonal_direction_keeps_both() {
        let verts = [v(&[0.0, 1.0]), v(&[0.0, -1.0])];
        let f = exposed_face(&verts, &v(&[1.0, 0.0]), 1e-9).unwrap();
        assert_eq!(f.active, vec![0, 1]);
        assert_eq!(f.slack, None);
    }

    #[test]
    fn vertex_exposed() {
        let verts = [v(&[0.0, 1.0]), v(&[0.0, -1.0])];
        let f = exposed_face(&verts, &v(&[0.0, 1.0]), 1e-9).unwrap();
        assert_eq!(f.active, vec![1]);
        assert_eq!(f.slack, Some(2.0));
    }

    #[test]
    fn zero_direction_rejected() {
        assert!(exposed_face(&[v(&[1.0])], &v(&[0.0]), 1e-9).is_err());
        assert!(exposed_face(&[], &v(&[1.0]), 1e-9).is_err());
    }

    #[test]
    fn collinear_points_are_dependent() {
        let pts = [v(&[0.0, 0.0, 0.0]), v(&[1.0, 1.0, 0.0]), v(&[2.0, 2.0, 0.0])];
        let r = geometric_independence(&pts, 1e-9);
        assert!(!r.independent);
        assert!(r.margin < 1e-12);
        let pts = [v(&[0.0, 0.0, 0.0]), v(&[1.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0])];
        assert!(geometric_independence(&pts, 1e-9).independent);
    }
}
