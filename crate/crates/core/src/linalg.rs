//! Small dense helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, Matrix3};

/// Right singular vector of the smallest singular value, plus all singular
/// values sorted in descending order.
///
/// Matrices with fewer rows than columns are zero-padded so the nullspace
/// direction is always part of the returned basis.
pub(crate) fn smallest_right_singular(a: &DMatrix<f64>) -> (DVector<f64>, Vec<f64>) {
    let ncols = a.ncols();
    let padded;
    let a = if a.nrows() < ncols {
        let mut m = DMatrix::zeros(ncols, ncols);
        m.rows_mut(0, a.nrows()).copy_from(a);
        padded = m;
        &padded
    } else {
        a
    };
    // Reduce tall systems to their square triangular factor first; the
    // singular values and right singular vectors are unchanged.
    let r = if a.nrows() > 2 * ncols { a.clone().qr().r() } else { a.clone() };
    let svd = r.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let last = *order.last().expect("non-empty matrix");
    (v_t.row(last).transpose(), sv)
}

/// Nearest rotation in Frobenius norm (polar projection onto SO(3)).
pub(crate) fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        // flip the column paired with the smallest singular value
        let (k, _) =
            svd.singular_values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("three singular values");
        u.column_mut(k).neg_mut();
        r = u * v_t;
    }
    r
}
