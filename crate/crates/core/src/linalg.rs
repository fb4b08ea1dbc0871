use crate::{Matrix, Vector};

/// Smallest singular value (0 for empty matrices).
pub(crate) fn min_singular_value(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.min()
}

/// Unit right singular vector for the smallest singular value.
pub(crate) fn near_kernel(m: &Matrix) -> (f64, Vector) {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let (idx, &sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let mut theta = vt.row(idx).transpose().into_owned();
    // Fix the sign so the largest component is positive.
    let imax = theta.iamax();
    if theta[imax] < 0.0 {
        theta = -theta;
    }
    (sigma, theta)
}

pub(crate) fn spectral_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}
