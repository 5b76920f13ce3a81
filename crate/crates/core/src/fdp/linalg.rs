//! Small dense helpers shared by the solver routes.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

/// Minimum-norm least-squares solution of `a x = b`, discarding singular
/// values below `rank_tol * sigma_max`.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>, rank_tol: f64) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DVector::zeros(a.ncols());
    }
    svd.solve(b, rank_tol * smax).expect("SVD computed with U and V")
}

/// Numerical rank with a relative cutoff.
pub fn rank(a: &DMatrix<f64>, rank_tol: f64) -> usize {
    if a.ncols() == 0 || a.nrows() == 0 {
        return 0;
    }
    let sv = SVD::new(a.clone(), false, false).singular_values;
    let smax = sv.max();
    sv.iter().filter(|&&s| s > rank_tol * smax).count()
}

/// Orthonormal basis of the orthogonal complement of `range(c)` in `R^rows`.
pub fn complement_basis(c: &DMatrix<f64>, rank_tol: f64) -> DMatrix<f64> {
    let m = c.nrows();
    if c.ncols() == 0 {
        return DMatrix::identity(m, m);
    }
    let svd = SVD::new(c.clone(), true, false);
    let u = svd.u.expect("U requested");
    let smax = svd.singular_values.max();
    let mut projector = DMatrix::<f64>::identity(m, m);
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > rank_tol * smax {
            let col = u.column(k);
            projector -= &col * col.transpose();
        }
    }
    let eig = SymmetricEigen::new(projector);
    let keep: Vec<usize> = (0..m).filter(|&k| eig.eigenvalues[k] > 0.5).collect();
    DMatrix::from_fn(m, keep.len(), |r, j| eig.eigenvectors[(r, keep[j])])
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
pub fn spectral_radius(h: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().fold(0.0, f64::max)
}
