//! Small dense helpers shared by the geometry, verification and control code.

use crate::{Error, Matrix, Result, Vector};

pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Inverse of a symmetric positive definite matrix via Cholesky, symmetrized
/// to remove round-off asymmetry. `None` if the matrix is not SPD or not finite.
pub fn spd_inverse(a: &Matrix) -> Option<Matrix> {
    if a.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let chol = a.clone().cholesky()?;
    Some(symmetrize(&chol.inverse()))
}

/// Largest eigenvalue of a symmetric matrix (0 for an empty matrix).
pub fn max_sym_eigenvalue(a: &Matrix) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    if a.nrows() == 1 {
        return a[(0, 0)];
    }
    if a.nrows() == 2 {
        let (p, q, r) = (a[(0, 0)], 0.5 * (a[(0, 1)] + a[(1, 0)]), a[(1, 1)]);
        let mean = 0.5 * (p + r);
        let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
        return mean + rad;
    }
    symmetrize(a).symmetric_eigen().eigenvalues.max()
}

/// Eigenvalue range `(min, max)` of a symmetric matrix.
pub fn sym_eigen_range(a: &Matrix) -> (f64, f64) {
    let eig = symmetrize(a).symmetric_eigen().eigenvalues;
    (eig.min(), eig.max())
}

/// Orthonormal basis (columns) of the null space of `bᵀ`, i.e. of the
/// orthogonal complement of span{b}.
pub fn left_null_space(b: &Matrix) -> Matrix {
    let n = b.nrows();
    let gram = b * b.transpose();
    let scale = gram.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let eig = gram.symmetric_eigen();
    let tol = 1e-10 * scale;
    let mut idx: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= tol).collect();
    idx.sort_unstable();
    let mut out = Matrix::zeros(n, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        out.set_column(c, &eig.eigenvectors.column(i));
    }
    out
}

/// Residual norm of the least-squares projection of `v` onto span of the
/// columns of `basis`.
pub fn span_residual(basis: &Matrix, v: &Vector) -> f64 {
    if basis.ncols() == 0 {
        return v.norm();
    }
    let svd = basis.clone().svd(true, true);
    match svd.solve(v, 1e-12) {
        Ok(coef) => (basis * coef - v).norm(),
        Err(_) => v.norm(),
    }
}

/// Numerical rank with a relative singular-value tolerance.
pub fn rank(a: &Matrix, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Central finite-difference step used for user-defined systems.
pub fn fd_step(x: &Vector) -> f64 {
    1e-6 * x.norm().max(1.0)
}

/// Central finite-difference Jacobian of a vector field.
pub fn fd_jacobian<F>(g: F, x: &Vector) -> Matrix
where
    F: Fn(&Vector) -> Vector,
{
    let h = fd_step(x);
    let n = x.len();
    let g0 = g(x);
    let mut jac = Matrix::zeros(g0.len(), n);
    let mut xp = x.clone();
    for j in 0..n {
        xp[j] = x[j] + h;
        let gp = g(&xp);
        xp[j] = x[j] - h;
        let gm = g(&xp);
        xp[j] = x[j];
        jac.set_column(j, &((gp - gm) / (2.0 * h)));
    }
    jac
}

pub fn check_len(what: &str, v: &Vector, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension(format!(
            "{what}: expected length {expected}, got {}",
            v.len()
        )));
    }
    Ok(())
}
